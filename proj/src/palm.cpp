#include <chrono>
#include <cmath>
#include <random>

#include "conv_model.hpp"
#include "maskbd/solvers.hpp"

namespace maskbd {

namespace {

// Spectra u_hat_l = dft(d_l .* x) for every mask, as columns.
CMatrix modulated_spectra(const MaskSet& ms, const CVector& x) {
  const Index n = ms.n();
  CMatrix U(n, ms.count());
  CVector buf(n);
  for (Index l = 0; l < ms.count(); ++l) {
    buf = ms.column(l).cwiseProduct(x);
    fft_forward(ms.grid(), std::span<const cplx>(buf.data(), n), std::span<cplx>(buf.data(), n));
    U.col(l) = buf;
  }
  return U;
}

// (1/2L) sum_l ||h (*) u_l - y_l||^2 via Parseval on the spectra.
double smooth_value(const CVector& h_hat, const CMatrix& U, const CMatrix& Y_hat) {
  const auto n = static_cast<double>(U.rows());
  const auto L = static_cast<double>(U.cols());
  const double total = ((U.array().colwise() * h_hat.array()) - Y_hat.array()).abs2().sum();
  return total / (2.0 * L * n);
}

CMatrix spectra_of(Grid g, const CMatrix& time_obs) {
  CMatrix out(time_obs.rows(), time_obs.cols());
  for (Index l = 0; l < time_obs.cols(); ++l) out.col(l) = fft_forward(g, CVector(time_obs.col(l)));
  return out;
}

CVector gaussian_vector(Index n, Field field, std::mt19937_64& engine) {
  std::normal_distribution<double> normal;
  CVector v(n);
  const double s = field == Field::complex ? 1.0 / std::sqrt(2.0) : 1.0;
  for (Index i = 0; i < n; ++i) {
    const double re = normal(engine);
    const double im = field == Field::complex ? normal(engine) : 0.0;
    v[i] = s * cplx(re, im);
  }
  return v;
}

}  // namespace

double palm_objective(const MeasurementSet& meas, const MaskSet& ms, const CVector& h, const CVector& x,
                      double lambda) {
  if (h.size() != ms.n() || x.size() != ms.n()) throw DimensionError("palm_objective: length mismatch");
  const CMatrix U = modulated_spectra(ms, x);
  return smooth_value(fft_forward(ms.grid(), h), U, spectra_of(ms.grid(), meas.time_obs)) +
         lambda * detail::l1_norm(x);
}

SolverReport palm_from(const MeasurementSet& meas, const MaskSet& ms, const PalmConfig& cfg, const CVector& h0,
                       const CVector& x0) {
  cfg.validate();
  if (meas.time_obs.size() == 0) throw ArgumentError("palm: time-domain observations are required");
  if (meas.n() != ms.n() || meas.count() != ms.count()) throw DimensionError("palm: measurements and masks disagree");
  if (h0.size() != ms.n() || x0.size() != ms.n()) throw DimensionError("palm: initial point length mismatch");

  const auto t0 = std::chrono::steady_clock::now();
  const Grid g = ms.grid();
  const auto L = static_cast<double>(ms.count());
  const double lambda = cfg.lambda;
  const CMatrix Y_hat = spectra_of(g, meas.time_obs);
  detail::ConvolutionModel model(ms, meas.time_obs);

  SolverReport report;
  report.solver = "palm";
  CVector h_hat = fft_forward(g, h0);
  CVector x = x0;
  CMatrix U = modulated_spectra(ms, x);
  double objective = smooth_value(h_hat, U, Y_hat) + lambda * detail::l1_norm(x);
  report.objective_history.push_back(objective);
  bool warned = false;

  for (int k = 1; k <= cfg.max_iters; ++k) {
    report.iterations = k;

    // h-step: the curvature of h -> F(h, x_k) is diagonal in frequency.
    const RVector s = U.cwiseAbs2().rowwise().sum() / L;
    const CVector cross = (U.conjugate().cwiseProduct(Y_hat)).rowwise().sum() / L;
    double lk = s.maxCoeff();
    if (!(lk > 0.0)) {
      lk = 1.0;
      if (!warned) report.warnings.push_back("palm: L_k vanished (x_k = 0); used step 1.0");
      warned = true;
    }
    const CVector grad_hat = s.cast<cplx>().cwiseProduct(h_hat) - cross;
    h_hat -= grad_hat / lk;

    // x-step: LASSO with h_{k+1} fixed, warm started at x_k.
    model.set_kernel(fft_inverse(g, h_hat));
    detail::LassoRun inner = detail::run_lasso(model, lambda, x, cfg.inner.max_iters, cfg.inner.tol);
    x = std::move(inner.x);

    U = modulated_spectra(ms, x);
    const double next = smooth_value(h_hat, U, Y_hat) + lambda * detail::l1_norm(x);
    if (!std::isfinite(next)) throw NumericalError("palm: objective became non-finite at iteration " + std::to_string(k));
    if (next > objective + 1e-12 * std::max(1.0, objective)) report.monotone = false;
    report.objective_history.push_back(next);
    const double rel = std::abs(objective - next) / std::max(std::abs(objective), 1e-300);
    objective = next;
    if (rel <= cfg.tol) {
      report.converged = true;
      break;
    }
  }
  if (!report.monotone) report.warnings.push_back("palm: composite objective increased");
  report.h = Signal(fft_inverse(g, h_hat), g);
  report.x = Signal(std::move(x), g);
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

SolverReport palm(const MeasurementSet& meas, const MaskSet& ms, const PalmConfig& cfg) {
  cfg.validate();
  const Index n = ms.n();
  CVector h0, x0;
  switch (cfg.init_mode) {
    case InitMode::constructed: {
      if (ms.count() < 2) throw ArgumentError("palm: constructed initialization needs L >= 2");
      LassoConfig inner = cfg.inner;
      inner.lambda = cfg.lambda;
      SplitInit init = split_init(meas, ms, inner);
      h0 = init.h0.values();
      x0 = init.x0.values();
      break;
    }
    case InitMode::randomized: {
      std::mt19937_64 engine(cfg.seed);
      h0 = gaussian_vector(n, cfg.field, engine);
      x0 = gaussian_vector(n, cfg.field, engine);
      break;
    }
    case InitMode::deterministic:
      h0 = CVector::Zero(n);
      h0[0] = 1.0;
      x0 = CVector::Zero(n);
      break;
  }
  SolverReport report = palm_from(meas, ms, cfg, h0, x0);
  report.solver = "palm-" + to_string(cfg.init_mode);
  report.h_init = Signal(std::move(h0), ms.grid());
  return report;
}

SolverReport least_squares_baseline(const MeasurementSet& meas, const MaskSet& ms, PalmConfig cfg) {
  cfg.lambda = 0.0;
  cfg.init_mode = InitMode::deterministic;
  SolverReport report = palm(meas, ms, cfg);
  report.solver = "ls";
  return report;
}

}  // namespace maskbd
