#include <chrono>
#include <cmath>

#include "conv_model.hpp"
#include "maskbd/solvers.hpp"

namespace maskbd {

namespace {

void require_time_obs(const MeasurementSet& meas, const MaskSet& ms) {
  if (meas.time_obs.size() == 0) throw ArgumentError("time-domain observations are required");
  if (meas.n() != ms.n() || meas.count() != ms.count() || meas.grid != ms.grid()) {
    throw DimensionError("measurements and masks disagree in shape");
  }
}

// (r_j + r_k, c_j + c_k) on the grid.
inline Index sum_index(const Grid& g, Index j, Index k) {
  const Index r = (j / g.cols + k / g.cols) % g.rows;
  const Index c = (j % g.cols + k % g.cols) % g.cols;
  return r * g.cols + c;
}

// Ties within this relative band go to the smaller index.
constexpr double kTieBand = 1e-12;

}  // namespace

CVector spectral_row(const MeasurementSet& meas, const MaskSet& ms, Index j) {
  require_time_obs(meas, ms);
  const Index n = ms.n();
  const Index L = ms.count();
  if (j < 0 || j >= n) throw ArgumentError("spectral_row: index out of range");
  const Grid g = ms.grid();
  CVector row = CVector::Zero(n);
  for (Index l = 0; l < L; ++l) {
    const cplx w = std::conj(ms.stacked()(j, l));
    for (Index k = 0; k < n; ++k) row[k] += w * meas.time_obs(sum_index(g, j, k), l);
  }
  return row / static_cast<double>(L);
}

CMatrix spectral_matrix(const MeasurementSet& meas, const MaskSet& ms) {
  require_time_obs(meas, ms);
  const Index n = ms.n();
  if (n > kDenseSpectralLimit) throw ArgumentError("spectral_matrix: n too large for a dense H");
  CMatrix H(n, n);
  for (Index j = 0; j < n; ++j) H.row(j) = spectral_row(meas, ms, j).transpose();
  return H;
}

SpectralInit spectral_init_h(const MeasurementSet& meas, const MaskSet& ms) {
  require_time_obs(meas, ms);
  const Index n = ms.n();
  const auto L = static_cast<double>(ms.count());
  std::optional<CMatrix> H;
  RVector norms2(n);
  if (n <= kDenseSpectralLimit) {
    H = spectral_matrix(meas, ms);
    norms2 = H->rowwise().squaredNorm();
  } else {
    // ||h_j||^2 = (1/L^2) sum_{l,m} d_lj conj(d_mj) <y_l, y_m>
    const CMatrix& D = ms.stacked();
    const CMatrix gram = meas.time_obs.adjoint() * meas.time_obs;
    norms2 = ((D * gram).cwiseProduct(D.conjugate())).rowwise().sum().real() / (L * L);
  }
  const double top = norms2.maxCoeff();
  if (!(top > 0.0)) throw DegenerateInputError("spectral_init_h: every row of H vanishes");
  Index j_sharp = 0;
  while (norms2[j_sharp] < top * (1.0 - kTieBand)) ++j_sharp;

  CVector row = H ? CVector(H->row(j_sharp).transpose()) : spectral_row(meas, ms, j_sharp);
  row /= row.norm();
  return SpectralInit{std::move(H), norms2.cwiseSqrt(), j_sharp, Signal(std::move(row), ms.grid())};
}

namespace detail {

SolverReport lasso_report(const MeasurementSet& meas, const MaskSet& ms, const Signal& h0, double lambda,
                          int max_iters, double tol, const CVector& x_start) {
  const auto t0 = std::chrono::steady_clock::now();
  ConvolutionModel model(ms, meas.time_obs);
  model.set_kernel(h0.values());
  LassoRun run = run_lasso(model, lambda, x_start, max_iters, tol, true);
  SolverReport report;
  report.solver = "lasso";
  report.h = h0;
  report.x = Signal(std::move(run.x), ms.grid());
  report.objective_history = std::move(run.history);
  report.iterations = run.iterations;
  report.converged = run.converged;
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!run.converged) report.warnings.push_back("lasso: iteration cap reached");
  return report;
}

}  // namespace detail

SolverReport solve_lasso(const MeasurementSet& meas, const MaskSet& ms, const Signal& h0, const LassoConfig& cfg) {
  cfg.validate();
  require_time_obs(meas, ms);
  if (h0.size() != ms.n()) throw DimensionError("solve_lasso: h0 length mismatch");
  if (std::abs(h0.norm() - 1.0) > 1e-8) throw PreconditionError("solve_lasso: h0 must have unit l2 norm");
  return detail::lasso_report(meas, ms, h0, cfg.lambda, cfg.max_iters, cfg.tol, CVector::Zero(ms.n()));
}

SplitInit split_init(const MeasurementSet& meas, const MaskSet& ms, const LassoConfig& cfg) {
  require_time_obs(meas, ms);
  if (!(cfg.lambda >= 0.0) || cfg.max_iters < 1 || !(cfg.tol > 0.0)) {
    throw ArgumentError("split_init: invalid LASSO settings");
  }
  const Index L = ms.count();
  if (L < 2) throw ArgumentError("split_init: needs at least two observations");
  const Index first = L / 2;
  SpectralInit spec = spectral_init_h(meas.subset(0, first), ms.subset(0, first));
  SolverReport lasso = detail::lasso_report(meas.subset(first, L - first), ms.subset(first, L - first), spec.h0,
                                            cfg.lambda, cfg.max_iters, cfg.tol, CVector::Zero(ms.n()));
  Signal x0 = *lasso.x;
  return SplitInit{spec.h0, std::move(x0), spec.j_sharp, std::move(lasso)};
}

}  // namespace maskbd
