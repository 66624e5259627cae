#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "maskbd/solvers.hpp"

namespace maskbd {

RVector project_l1_simplex(const RVector& s, double radius) {
  if (!(radius > 0.0)) throw ArgumentError("project_l1_simplex: radius must be positive");
  if (s.sum() <= radius) return s;
  std::vector<double> sorted(s.data(), s.data() + s.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumulative += sorted[i];
    const double candidate = (cumulative - radius) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) theta = candidate;
  }
  return (s.array() - theta).cwiseMax(0.0).matrix();
}

CMatrix project_nuclear_ball(const CMatrix& X, double radius) {
  if (!(radius > 0.0)) throw ArgumentError("project_nuclear_ball: radius must be positive");
  const Eigen::BDCSVD<CMatrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericalError("project_nuclear_ball: SVD failed on a " + std::to_string(X.rows()) + "x" +
                         std::to_string(X.cols()) + " matrix with Frobenius norm " + std::to_string(X.norm()));
  }
  const RVector& sv = svd.singularValues();
  if (sv.sum() <= radius) return X;
  const RVector shrunk = project_l1_simplex(sv, radius);
  Index keep = 0;
  while (keep < shrunk.size() && shrunk[keep] > 0.0) ++keep;
  return svd.matrixU().leftCols(keep) * shrunk.head(keep).cast<cplx>().asDiagonal() *
         svd.matrixV().leftCols(keep).adjoint();
}

Rank1Factors rank1_extract(const CMatrix& X) {
  if (X.size() == 0 || X.cwiseAbs().maxCoeff() == 0.0) throw ArgumentError("rank1_extract: X must be nonzero");
  const Eigen::BDCSVD<CMatrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericalError("rank1_extract: SVD failed");
  const double sigma = svd.singularValues()[0];
  const double root = std::sqrt(sigma);
  CVector h_hat = root * svd.matrixU().col(0);
  CVector x = root * svd.matrixV().col(0).conjugate();
  return Rank1Factors{Signal(std::move(h_hat), Domain::frequency), Signal(std::move(x)), sigma};
}

SolverReport solve_constrained_ls(const MeasurementSet& meas, const MaskSet& ms, const ClsConfig& cfg) {
  cfg.validate();
  const Index n = ms.n();
  const Index L = ms.count();
  if (meas.freq_obs.rows() != n || meas.freq_obs.cols() != L) {
    throw DimensionError("solve_constrained_ls: frequency observations must be n x L");
  }
  const auto t0 = std::chrono::steady_clock::now();

  double step = 0.0;
  const bool auto_step = !cfg.step.has_value();
  if (auto_step) {
    double smax = 0.0;
    if (n >= L) {
      smax = singular_bounds(ms).sigma_max;
    } else {
      const Eigen::BDCSVD<CMatrix> svd(ms.stacked());
      smax = svd.singularValues()[0];
    }
    step = static_cast<double>(L) / (smax * smax);
  } else {
    step = *cfg.step;
  }

  SolverReport report;
  report.solver = "cls";
  const CMatrix& Y = meas.freq_obs;
  CMatrix X = CMatrix::Zero(n, n);
  CMatrix residual = -Y;  // A(X) - Y
  double objective = residual.norm();
  const double y_norm = objective;
  report.objective_history.push_back(objective);
  int quiet = 0;

  for (int it = 1; it <= cfg.max_iters && objective > 0.0; ++it) {
    report.iterations = it;
    CMatrix next = project_nuclear_ball(X - step * apply_A_adjoint(residual, ms), cfg.radius);
    CMatrix next_residual = apply_A(next, ms) - Y;
    const double next_objective = next_residual.norm();
    if (!std::isfinite(next_objective)) throw NumericalError("solve_constrained_ls: objective is not finite");
    // Rounding in the projection leaves a floor near eps * ||Y||.
    if (next_objective > objective * (1.0 + 1e-10) + 1e-13 * y_norm) {
      if (auto_step) {
        throw StepSizeError("solve_constrained_ls: objective increased from " + std::to_string(objective) + " to " +
                            std::to_string(next_objective) + " at iteration " + std::to_string(it));
      }
      report.monotone = false;
    }
    if (next_objective > objective && report.monotone) {
      // Stalled on the rounding floor; keep the last accepted iterate.
      report.converged = true;
      break;
    }
    const double decrease = (objective - next_objective) / objective;
    X.swap(next);
    residual.swap(next_residual);
    objective = next_objective;
    report.objective_history.push_back(objective);
    quiet = decrease <= cfg.tol ? quiet + 1 : 0;
    if (quiet >= cfg.patience) {
      report.converged = true;
      break;
    }
  }
  if (objective == 0.0) report.converged = true;
  if (!report.converged) report.warnings.push_back("cls: iteration cap reached");
  report.lifted = std::move(X);
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace maskbd
