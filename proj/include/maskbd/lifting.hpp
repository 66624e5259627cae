#pragma once

#include <filesystem>
#include <limits>
#include <optional>

#include "maskbd/masks.hpp"

namespace maskbd {

/// Observations y_l = h (*) (d_l .* x) + z_l in both domains.
///
/// time_obs column l holds y_l. freq_obs column l holds dft(y_l) / sqrt(L),
/// so that freq_obs = A(h_hat x^T) + Z_hat with Z_hat = dft(Z) / sqrt(L).
struct MeasurementSet {
  Grid grid;
  CMatrix time_obs;
  CMatrix freq_obs;
  std::optional<CMatrix> noise;       ///< Z, time domain
  std::optional<CMatrix> noise_freq;  ///< Z_hat
  std::uint64_t mask_fingerprint = 0;
  std::uint64_t mask_seed = 0;

  Index n() const { return time_obs.rows(); }
  Index count() const { return time_obs.cols(); }

  /// Observations l in [first, first + count); noise records are dropped.
  MeasurementSet subset(Index first, Index count) const;
};

/// Frequency-domain companion of a time-domain observation matrix.
CMatrix normalized_spectrum(Grid grid, const CMatrix& time_obs);

MeasurementSet forward_time(const Signal& h, const Signal& x, const MaskSet& ms,
                            const std::optional<CMatrix>& noise = std::nullopt);

/// A(X) = (F .* X) D_g / sqrt(L), evaluated without forming F.
CMatrix apply_A(const CMatrix& X, const MaskSet& ms);

/// A^*(Y) = conj(F) .* (Y D_g^*) / sqrt(L).
CMatrix apply_A_adjoint(const CMatrix& Y, const MaskSet& ms);

/// Sentinel that turns add_awgn into a passthrough.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Complex circular white Gaussian noise at `snr_db` relative to the mean power
/// of all current observations. The noise is accumulated into the record.
MeasurementSet add_awgn(const MeasurementSet& meas, double snr_db, std::uint64_t seed);

/// Output of the lower-bound noise construction.
struct AdversarialNoise {
  CMatrix noise_freq;  ///< Z_hat = A(X_tilde)
  CMatrix x_tilde;     ///< t' X0
  CMatrix w;           ///< W, lies in the null space of A
  CMatrix x0;          ///< -beta h_hat x^T + W
  CVector x_perp;      ///< component of x orthogonal to span(conj(d_l))
  double beta = 0.0;
  double t_used = 0.0;  ///< largest t' <= t keeping ||h_hat x^T + t' X0||_* <= ||h_hat x^T||_*
};

/// Builds noise under which the constrained least-squares optimum sits at
/// h_hat x^T + t' X0 with zero residual. h_hat and x must be unit vectors and
/// h_hat[0] must be nonzero.
AdversarialNoise adversarial_noise(const CVector& h_hat, const CVector& x, const MaskSet& ms, double t);

/// Nuclear norm through the singular values.
double nuclear_norm(const CMatrix& X);

void save_measurements(const MeasurementSet& meas, const std::filesystem::path& path);
MeasurementSet load_measurements(const std::filesystem::path& path);

}  // namespace maskbd
