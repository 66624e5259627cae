#pragma once

#include <span>
#include <vector>

#include "maskbd/common.hpp"

namespace maskbd {

/// Sampling lattice of a signal. One-dimensional signals use rows == 1.
/// Two-dimensional signals are flattened row-major: index = r * cols + c.
struct Grid {
  Index rows = 1;
  Index cols = 1;

  static Grid line(Index n) { return Grid{1, n}; }
  Index size() const { return rows * cols; }
  bool is_line() const { return rows == 1; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

enum class Domain { time, frequency };

/// Finite complex amplitudes on a grid, tagged with the domain they live in.
class Signal {
 public:
  Signal(CVector values, Domain domain = Domain::time);
  Signal(CVector values, Grid grid, Domain domain = Domain::time);

  const CVector& values() const { return values_; }
  Grid grid() const { return grid_; }
  Domain domain() const { return domain_; }
  Index size() const { return values_.size(); }
  double norm() const { return values_.norm(); }
  cplx operator[](Index i) const { return values_[i]; }

 private:
  CVector values_;
  Grid grid_;
  Domain domain_;
};

// ---------------------------------------------------------------------------
// Raw transforms. Forward is unnormalized with kernel exp(-2 pi i jk / n);
// the inverse carries 1/n. For grids with rows > 1 these are 2-D transforms.
// `in` and `out` may alias.

void fft_forward(Grid grid, std::span<const cplx> in, std::span<cplx> out);
void fft_inverse(Grid grid, std::span<const cplx> in, std::span<cplx> out);
/// Inverse transform without the 1/n factor.
void fft_backward(Grid grid, std::span<const cplx> in, std::span<cplx> out);

CVector fft_forward(Grid grid, const CVector& in);
CVector fft_inverse(Grid grid, const CVector& in);

// ---------------------------------------------------------------------------
// Signal operations.

Signal dft(const Signal& z);
Signal idft(const Signal& z);

/// h (*) x, computed through the convolution theorem.
Signal circular_convolve(const Signal& h, const Signal& x);

/// Circular cross-correlation C_h^* v, the adjoint of v -> h (*) v.
Signal circular_correlate(const Signal& h, const Signal& v);

/// out[j] = z[(j - tau) mod n] for 0 <= tau <= n (1-D only).
Signal cyclic_shift(const Signal& z, Index tau);

/// 2-D cyclic shift on the signal's grid: out[r][c] = z[r - dr][c - dc].
Signal cyclic_shift(const Signal& z, Index dr, Index dc);

enum class CirculantVariant {
  standard,  ///< C_z[j,k] = z[(j - k) mod n]
  check,     ///< C-check_z[j,k] = z[(j + k) mod n]
};

Signal apply_circulant(const Signal& z, const Signal& v, CirculantVariant variant);

/// Dense circulant; intended for oracles and small problems (n <= 64).
CMatrix circulant_matrix(const Signal& z, CirculantVariant variant);

/// Dense DFT matrix with the forward kernel.
CMatrix dft_matrix(Index n);

// ---------------------------------------------------------------------------
// Tangent space of the rank-1 manifold at h_hat x^T.

enum class TangentPart { T, Tperp };

class TangentProjector {
 public:
  /// Both vectors must have unit l2 norm (relative tolerance 1e-8).
  TangentProjector(CVector h_hat, CVector x);

  const CVector& h_hat() const { return h_hat_; }
  const CVector& x() const { return x_; }

 private:
  CVector h_hat_;
  CVector x_;
};

CMatrix project_tangent(const CMatrix& X, const TangentProjector& proj, TangentPart part);

// ---------------------------------------------------------------------------
// Metrics.

/// ||dft(h)||_inf^2 / ||h||_2^2.
double coherence_mu(const Signal& h);

/// max over i != j in support of |<s_i(h), s_j(h)>| / ||h||^2; 0 for |support| = 1.
double mutual_coherence_mu_h(const Signal& h, std::span<const Index> support);

/// min over theta of ||x - e^{i theta} y||_2.
double phase_dist(const CVector& x, const CVector& y);
double phase_dist(const Signal& x, const Signal& y);

/// Unit-modulus c minimizing ||x - c y||_2 (1 when <y, x> = 0).
cplx optimal_phase(const CVector& x, const CVector& y);

/// z * max(1 - tau / |z|, 0), elementwise; exact zero stays zero.
void soft_threshold(const CVector& z, double tau, CVector& out);
CVector soft_threshold(const CVector& z, double tau);

}  // namespace maskbd
