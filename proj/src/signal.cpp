#include "maskbd/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

namespace maskbd {

namespace {

void check_finite(const CVector& v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) {
      throw ArgumentError("signal contains a non-finite entry at index " + std::to_string(i));
    }
  }
}

void require_same_shape(const Signal& a, const Signal& b, const char* what) {
  if (a.size() != b.size() || a.grid() != b.grid()) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  }
}

// Plans are created once per (shape, direction, placement) and executed through
// the new-array interface, which FFTW documents as thread safe. Creation itself
// is not, hence the mutex.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  // SIMD plans need both buffers aligned like fftw_malloc; others fall back.
  fftw_plan get(Grid grid, int sign, bool in_place, bool aligned) {
    const auto key = std::make_tuple(grid.rows, grid.cols, sign, in_place, aligned);
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const auto n = static_cast<std::size_t>(grid.size());
    auto* a = fftw_alloc_complex(n);
    auto* b = in_place ? a : fftw_alloc_complex(n);
    const unsigned flags = aligned ? FFTW_ESTIMATE : FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = grid.rows == 1
                         ? fftw_plan_dft_1d(static_cast<int>(grid.cols), a, b, sign, flags)
                         : fftw_plan_dft_2d(static_cast<int>(grid.rows), static_cast<int>(grid.cols),
                                            a, b, sign, flags);
    if (!in_place) fftw_free(b);
    fftw_free(a);
    if (plan == nullptr) throw NumericalError("FFTW could not create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<Index, Index, int, bool, bool>, fftw_plan> plans_;
};

void execute(Grid grid, int sign, std::span<const cplx> in, std::span<cplx> out) {
  const auto n = static_cast<std::size_t>(grid.size());
  if (in.size() != n || out.size() != n) {
    throw DimensionError("fft: buffer length does not match grid size");
  }
  const bool in_place = in.data() == out.data();
  // The input is never written for out-of-place complex transforms.
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  const bool aligned = fftw_alignment_of(reinterpret_cast<double*>(src)) == 0 &&
                       fftw_alignment_of(reinterpret_cast<double*>(dst)) == 0;
  fftw_plan plan = PlanCache::instance().get(grid, sign, in_place, aligned);
  fftw_execute_dft(plan, src, dst);
}

}  // namespace

Signal::Signal(CVector values, Domain domain)
    : Signal(std::move(values), Grid::line(0), domain) {}

Signal::Signal(CVector values, Grid grid, Domain domain)
    : values_(std::move(values)), grid_(grid), domain_(domain) {
  if (values_.size() < 1) throw ArgumentError("signal length must be at least 1");
  if (grid_.size() == 0) grid_ = Grid::line(values_.size());
  if (grid_.size() != values_.size()) {
    throw DimensionError("signal length does not match its grid");
  }
  check_finite(values_);
}

void fft_forward(Grid grid, std::span<const cplx> in, std::span<cplx> out) {
  execute(grid, FFTW_FORWARD, in, out);
}

void fft_backward(Grid grid, std::span<const cplx> in, std::span<cplx> out) {
  execute(grid, FFTW_BACKWARD, in, out);
}

void fft_inverse(Grid grid, std::span<const cplx> in, std::span<cplx> out) {
  execute(grid, FFTW_BACKWARD, in, out);
  const double scale = 1.0 / static_cast<double>(grid.size());
  for (auto& v : out) v *= scale;
}

CVector fft_forward(Grid grid, const CVector& in) {
  CVector out(in.size());
  fft_forward(grid, std::span<const cplx>(in.data(), in.size()), std::span<cplx>(out.data(), out.size()));
  return out;
}

CVector fft_inverse(Grid grid, const CVector& in) {
  CVector out(in.size());
  fft_inverse(grid, std::span<const cplx>(in.data(), in.size()), std::span<cplx>(out.data(), out.size()));
  return out;
}

Signal dft(const Signal& z) {
  return Signal(fft_forward(z.grid(), z.values()), z.grid(), Domain::frequency);
}

Signal idft(const Signal& z) {
  return Signal(fft_inverse(z.grid(), z.values()), z.grid(), Domain::time);
}

Signal circular_convolve(const Signal& h, const Signal& x) {
  require_same_shape(h, x, "circular_convolve");
  const Grid g = h.grid();
  CVector spec = fft_forward(g, h.values()).cwiseProduct(fft_forward(g, x.values()));
  return Signal(fft_inverse(g, spec), g);
}

Signal circular_correlate(const Signal& h, const Signal& v) {
  require_same_shape(h, v, "circular_correlate");
  const Grid g = h.grid();
  CVector spec = fft_forward(g, h.values()).conjugate().cwiseProduct(fft_forward(g, v.values()));
  return Signal(fft_inverse(g, spec), g);
}

Signal cyclic_shift(const Signal& z, Index tau) {
  const Index n = z.size();
  if (!z.grid().is_line()) throw DimensionError("cyclic_shift(tau) expects a 1-D signal");
  if (tau < 0 || tau > n) {
    throw ArgumentError("cyclic_shift: tau=" + std::to_string(tau) + " outside [0, " + std::to_string(n) + "]");
  }
  CVector out(n);
  for (Index j = 0; j < n; ++j) out[j] = z[((j - tau) % n + n) % n];
  return Signal(std::move(out), z.grid(), z.domain());
}

Signal cyclic_shift(const Signal& z, Index dr, Index dc) {
  const Grid g = z.grid();
  CVector out(g.size());
  for (Index r = 0; r < g.rows; ++r) {
    const Index sr = ((r - dr) % g.rows + g.rows) % g.rows;
    for (Index c = 0; c < g.cols; ++c) {
      const Index sc = ((c - dc) % g.cols + g.cols) % g.cols;
      out[r * g.cols + c] = z[sr * g.cols + sc];
    }
  }
  return Signal(std::move(out), g, z.domain());
}

Signal apply_circulant(const Signal& z, const Signal& v, CirculantVariant variant) {
  require_same_shape(z, v, "apply_circulant");
  if (!z.grid().is_line()) throw DimensionError("apply_circulant expects 1-D signals");
  if (variant == CirculantVariant::standard) return circular_convolve(z, v);
  // C-check_z v [j] = sum_k z[j + k] v[k] = (conj(v) correlated with z)[j]; in the
  // frequency domain that is dft(z) * conj(dft(conj(v))).
  const Grid g = z.grid();
  CVector spec =
      fft_forward(g, z.values()).cwiseProduct(fft_forward(g, v.values().conjugate()).conjugate());
  return Signal(fft_inverse(g, spec), g);
}

CMatrix circulant_matrix(const Signal& z, CirculantVariant variant) {
  const Index n = z.size();
  CMatrix C(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      C(j, k) = variant == CirculantVariant::standard ? z[((j - k) % n + n) % n] : z[(j + k) % n];
    }
  }
  return C;
}

CMatrix dft_matrix(Index n) {
  CMatrix F(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n);
      F(j, k) = std::polar(1.0, angle);
    }
  }
  return F;
}

TangentProjector::TangentProjector(CVector h_hat, CVector x) : h_hat_(std::move(h_hat)), x_(std::move(x)) {
  if (h_hat_.size() != x_.size()) throw DimensionError("TangentProjector: length mismatch");
  if (std::abs(h_hat_.norm() - 1.0) > 1e-8 || std::abs(x_.norm() - 1.0) > 1e-8) {
    throw ArgumentError("TangentProjector: h_hat and x must have unit norm");
  }
}

CMatrix project_tangent(const CMatrix& X, const TangentProjector& proj, TangentPart part) {
  const CVector& h = proj.h_hat();
  const CVector& x = proj.x();
  if (X.rows() != h.size() || X.cols() != x.size()) {
    throw DimensionError("project_tangent: matrix shape does not match projector");
  }
  // Left factor (I - h h^*), right factor (I - conj(x) x^T), applied as rank-1 updates.
  const CVector xbar = x.conjugate();
  const Eigen::RowVectorXcd hX = h.adjoint() * X;  // h^* X
  const CVector Xxbar = X * xbar;                  // X conj(x)
  const cplx hXxbar = hX.transpose().cwiseProduct(xbar).sum();  // h^* X conj(x)
  CMatrix perp = X - h * hX - Xxbar * x.transpose() + (hXxbar * h) * x.transpose();
  if (part == TangentPart::Tperp) return perp;
  return X - perp;
}

double coherence_mu(const Signal& h) {
  const double energy = h.values().squaredNorm();
  if (energy == 0.0) throw ArgumentError("coherence_mu: zero kernel");
  const CVector spec = fft_forward(h.grid(), h.values());
  return spec.cwiseAbs2().maxCoeff() / energy;
}

double mutual_coherence_mu_h(const Signal& h, std::span<const Index> support) {
  if (support.empty()) throw ArgumentError("mutual_coherence_mu_h: empty support");
  const double energy = h.values().squaredNorm();
  if (energy == 0.0) throw ArgumentError("mutual_coherence_mu_h: zero kernel");
  const Index n = h.size();
  // <s_i(h), s_j(h)> depends on (j - i) mod n only: it is the autocorrelation of h.
  const CVector spec = fft_forward(h.grid(), h.values());
  const CVector autocorr = fft_inverse(h.grid(), CVector(spec.cwiseAbs2().cast<cplx>()));
  double best = 0.0;
  for (std::size_t a = 0; a < support.size(); ++a) {
    for (std::size_t b = 0; b < support.size(); ++b) {
      if (a == b || support[a] == support[b]) continue;
      const Index lag = ((support[b] - support[a]) % n + n) % n;
      best = std::max(best, std::abs(autocorr[lag]) / energy);
    }
  }
  return best;
}

double phase_dist(const CVector& x, const CVector& y) {
  if (x.size() != y.size()) throw DimensionError("phase_dist: length mismatch");
  // The expanded form ||x||^2 + ||y||^2 - 2|<y,x>| cancels badly near zero.
  return (x - optimal_phase(x, y) * y).norm();
}

double phase_dist(const Signal& x, const Signal& y) { return phase_dist(x.values(), y.values()); }

cplx optimal_phase(const CVector& x, const CVector& y) {
  const cplx c = y.dot(x);  // y^* x
  const double m = std::abs(c);
  return m == 0.0 ? cplx(1.0, 0.0) : c / m;
}

void soft_threshold(const CVector& z, double tau, CVector& out) {
  out.resize(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    const double m = std::abs(z[i]);
    out[i] = m > tau ? z[i] * (1.0 - tau / m) : cplx(0.0, 0.0);
  }
}

CVector soft_threshold(const CVector& z, double tau) {
  CVector out;
  soft_threshold(z, tau, out);
  return out;
}

}  // namespace maskbd
