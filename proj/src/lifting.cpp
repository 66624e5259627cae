#include "maskbd/lifting.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "binary_io.hpp"
#include "json.hpp"

namespace maskbd {

namespace {

constexpr std::string_view kMeasMagic = "MBDMEAS1";

// Row j of F has entries w[(j * k) mod n]; keeping only the n roots avoids an
// n x n table.
CVector dft_roots(Index n) {
  CVector w(n);
  for (Index k = 0; k < n; ++k) {
    w[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
  }
  return w;
}

void require_line(const MaskSet& ms, const char* what) {
  if (!ms.grid().is_line()) throw DimensionError(std::string(what) + ": lifted operator is defined for 1-D masks");
}

}  // namespace

CMatrix normalized_spectrum(Grid grid, const CMatrix& time_obs) {
  const Index L = time_obs.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(L));
  CMatrix out(time_obs.rows(), L);
  for (Index l = 0; l < L; ++l) {
    CVector col = time_obs.col(l);
    out.col(l) = fft_forward(grid, col) * scale;
  }
  return out;
}

MeasurementSet MeasurementSet::subset(Index first, Index count) const {
  if (first < 0 || count < 1 || first + count > this->count()) {
    throw ArgumentError("MeasurementSet::subset out of range");
  }
  MeasurementSet out;
  out.grid = grid;
  out.time_obs = time_obs.middleCols(first, count);
  out.freq_obs = normalized_spectrum(grid, out.time_obs);
  out.mask_fingerprint = mask_fingerprint;
  out.mask_seed = mask_seed;
  return out;
}

MeasurementSet forward_time(const Signal& h, const Signal& x, const MaskSet& ms, const std::optional<CMatrix>& noise) {
  const Index n = ms.n();
  const Index L = ms.count();
  if (h.size() != n || x.size() != n || h.grid() != ms.grid() || x.grid() != ms.grid()) {
    throw DimensionError("forward_time: signal and mask shapes disagree");
  }
  if (noise && (noise->rows() != n || noise->cols() != L)) throw DimensionError("forward_time: noise shape mismatch");

  const Grid g = ms.grid();
  const CVector h_spec = fft_forward(g, h.values());
  MeasurementSet meas;
  meas.grid = g;
  meas.time_obs.resize(n, L);
  CVector buf(n);
  for (Index l = 0; l < L; ++l) {
    buf = ms.column(l).cwiseProduct(x.values());
    fft_forward(g, std::span<const cplx>(buf.data(), n), std::span<cplx>(buf.data(), n));
    buf = buf.cwiseProduct(h_spec);
    fft_inverse(g, std::span<const cplx>(buf.data(), n), std::span<cplx>(buf.data(), n));
    meas.time_obs.col(l) = buf;
  }
  if (noise) {
    meas.time_obs += *noise;
    meas.noise = *noise;
    meas.noise_freq = normalized_spectrum(g, *noise);
  }
  meas.freq_obs = normalized_spectrum(g, meas.time_obs);
  meas.mask_fingerprint = ms.fingerprint();
  meas.mask_seed = ms.seed();
  return meas;
}

CMatrix apply_A(const CMatrix& X, const MaskSet& ms) {
  require_line(ms, "apply_A");
  const Index n = ms.n();
  if (X.rows() != n || X.cols() != n) throw DimensionError("apply_A: X must be n x n");
  const CVector w = dft_roots(n);
  CMatrix FX(n, n);
  for (Index k = 0; k < n; ++k) {
    for (Index j = 0; j < n; ++j) FX(j, k) = w[(j * k) % n] * X(j, k);
  }
  return (FX * ms.stacked()) / std::sqrt(static_cast<double>(ms.count()));
}

CMatrix apply_A_adjoint(const CMatrix& Y, const MaskSet& ms) {
  require_line(ms, "apply_A_adjoint");
  const Index n = ms.n();
  if (Y.rows() != n || Y.cols() != ms.count()) throw DimensionError("apply_A_adjoint: Y must be n x L");
  const CVector w = dft_roots(n);
  CMatrix out = Y * ms.stacked().adjoint();
  for (Index k = 0; k < n; ++k) {
    for (Index j = 0; j < n; ++j) out(j, k) *= std::conj(w[(j * k) % n]);
  }
  return out / std::sqrt(static_cast<double>(ms.count()));
}

MeasurementSet add_awgn(const MeasurementSet& meas, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw ArgumentError("add_awgn: snr_db must be finite (or +inf for no noise)");
  }
  if (meas.time_obs.size() == 0) throw ArgumentError("add_awgn: no time-domain observations");
  MeasurementSet out = meas;
  const Index n = meas.n();
  const Index L = meas.count();
  CMatrix Z = CMatrix::Zero(n, L);
  if (snr_db != kNoNoise) {
    const double power = meas.time_obs.cwiseAbs2().mean();
    const double variance = power * std::pow(10.0, -snr_db / 10.0);
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
    for (Index l = 0; l < L; ++l) {
      for (Index j = 0; j < n; ++j) {
        const double re = normal(engine);
        const double im = normal(engine);
        Z(j, l) = cplx(re, im);
      }
    }
  }
  out.time_obs += Z;
  out.freq_obs = normalized_spectrum(meas.grid, out.time_obs);
  out.noise = meas.noise ? CMatrix(*meas.noise + Z) : Z;
  out.noise_freq = normalized_spectrum(meas.grid, *out.noise);
  return out;
}

double nuclear_norm(const CMatrix& X) {
  const Eigen::BDCSVD<CMatrix> svd(X);
  return svd.singularValues().sum();
}

AdversarialNoise adversarial_noise(const CVector& h_hat, const CVector& x, const MaskSet& ms, double t) {
  require_line(ms, "adversarial_noise");
  const Index n = ms.n();
  const Index L = ms.count();
  if (h_hat.size() != n || x.size() != n) throw DimensionError("adversarial_noise: vector length mismatch");
  if (std::abs(h_hat.norm() - 1.0) > 1e-8 || std::abs(x.norm() - 1.0) > 1e-8) {
    throw PreconditionError("adversarial_noise: h_hat and x must be unit vectors");
  }
  if (!(t >= 0.0) || !std::isfinite(t)) throw ArgumentError("adversarial_noise: t must be finite and >= 0");
  const double h0 = std::abs(h_hat[0]);
  if (h0 == 0.0) throw PreconditionError("adversarial_noise: h_hat[0] is zero; permute the indices first");

  const CMatrix& D = ms.stacked();
  const CMatrix Dbar = D.conjugate();
  // Projection of x onto span{conj(d_l)} via the L x L Hermitian Gram system.
  const CMatrix gram = D.transpose() * Dbar;
  const CVector coeffs = gram.ldlt().solve(D.transpose() * x);

  AdversarialNoise out;
  out.x_perp = x - Dbar * coeffs;
  const double perp_norm = out.x_perp.norm();
  if (perp_norm < 1e-10) throw DegenerateInputError("adversarial_noise: x lies in span of conj(d_l)");

  const double nu = ms.distribution().nu();
  const auto dn = static_cast<double>(n);
  out.beta = 2.0 * nu * std::sqrt(static_cast<double>(L) * std::log(dn)) / std::sqrt(dn - dn / (2.0 * nu * nu));

  const cplx phase = h_hat[0] / h0;
  out.w = CMatrix::Zero(n, n);
  out.w.row(0) = (-phase / perp_norm) * out.x_perp.transpose();
  const CMatrix truth = h_hat * x.transpose();
  out.x0 = -out.beta * truth + out.w;

  const double radius = h_hat.norm() * x.norm();
  auto excess = [&](double s) { return nuclear_norm(truth + s * out.x0) - radius; };
  double feasible = 0.0;
  if (excess(t) <= 0.0) {
    feasible = t;
  } else {
    double infeasible = t;
    while (infeasible - feasible > 1e-10 * std::max(t, 1e-300)) {
      const double mid = 0.5 * (feasible + infeasible);
      (excess(mid) <= 0.0 ? feasible : infeasible) = mid;
    }
  }
  out.t_used = feasible;
  out.x_tilde = feasible * out.x0;
  out.noise_freq = apply_A(out.x_tilde, ms);
  return out;
}

void save_measurements(const MeasurementSet& meas, const std::filesystem::path& path) {
  {
    detail::BinaryWriter w(path);
    w.magic(kMeasMagic);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(meas.grid.rows));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(meas.grid.cols));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(meas.count()));
    const std::uint32_t flags = meas.noise ? 1u : 0u;
    w.put<std::uint32_t>(flags);
    w.put<std::uint64_t>(meas.mask_fingerprint);
    w.put<std::uint64_t>(meas.mask_seed);
    w.matrix(meas.time_obs);
    w.matrix(meas.freq_obs);
    if (meas.noise) {
      w.matrix(*meas.noise);
      w.matrix(*meas.noise_freq);
    }
    w.finish();
  }
  nlohmann::json meta;
  meta["format"] = "maskbd.measurements";
  meta["version"] = 1;
  meta["n"] = meas.n();
  meta["rows"] = meas.grid.rows;
  meta["cols"] = meas.grid.cols;
  meta["L"] = meas.count();
  meta["has_noise"] = meas.noise.has_value();
  meta["mask_fingerprint"] = meas.mask_fingerprint;
  meta["mask_seed"] = meas.mask_seed;
  if (meas.noise) meta["noise_fro"] = meas.noise->norm();
  std::ofstream(path.string() + ".json") << meta.dump(2) << '\n';
}

MeasurementSet load_measurements(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic(kMeasMagic);
  MeasurementSet meas;
  meas.grid.rows = static_cast<Index>(r.get<std::uint64_t>());
  meas.grid.cols = static_cast<Index>(r.get<std::uint64_t>());
  const auto L = static_cast<Index>(r.get<std::uint64_t>());
  const auto flags = r.get<std::uint32_t>();
  meas.mask_fingerprint = r.get<std::uint64_t>();
  meas.mask_seed = r.get<std::uint64_t>();
  const Index n = meas.grid.size();
  meas.time_obs = r.matrix(n, L);
  meas.freq_obs = r.matrix(n, L);
  if (flags & 1u) {
    meas.noise = r.matrix(n, L);
    meas.noise_freq = r.matrix(n, L);
  }
  r.expect_end();
  return meas;
}

}  // namespace maskbd
