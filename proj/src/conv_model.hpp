#pragma once

#include <vector>

#include "maskbd/masks.hpp"

namespace maskbd::detail {

/// Quadratic part of (1/2L) sum_l ||h (*) (d_l .* x) - y_l||^2 for a fixed h,
/// written as f(x) = 1/2 x^* G x - Re(b^* x) + c.
///
/// Small problems keep G dense: G = circ(idft|h_hat|^2) .* M with the mask
/// correlation M = conj(D) D^T / L cached once. Larger ones apply G with FFTs.
class ConvolutionModel {
 public:
  ConvolutionModel(const MaskSet& ms, const CMatrix& time_obs);

  void set_kernel(const CVector& h);

  void gram(const CVector& z, CVector& out) const;
  const CVector& linear() const { return b_; }
  double constant() const { return c_; }
  Index n() const { return grid_.size(); }
  bool dense() const { return dense_; }

  /// f(z) given G z.
  double value(const CVector& z, const CVector& gz) const {
    return 0.5 * z.dot(gz).real() - b_.dot(z).real() + c_;
  }

  /// ||G||_2 by power iteration, inflated by 1.05. The first call runs 20
  /// sweeps from a fixed random start; later calls (after set_kernel) run 5
  /// sweeps from the previous top eigenvector.
  double lipschitz() const;

  static constexpr Index kDenseLimit = 256;

 private:
  Grid grid_;
  const CMatrix& masks_;
  Eigen::MatrixXd real_masks_;  // filled when every mask entry is real
  CMatrix y_hat_;
  bool dense_;
  CMatrix mask_corr_;
  CMatrix G_;
  CVector power_;   // |h_hat|^2
  RVector spectral_gain_;  // |h_hat|^2 / (n L), applied before an unnormalized inverse
  CVector b_;
  double c_ = 0.0;
  mutable CVector buf_;
  mutable CVector top_;
};

struct LassoRun {
  CVector x;
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
  double step = 0.0;
  double residual = 0.0;
};

/// FISTA with monotone restart on f(x) + lambda ||x||_1 (lambda >= 0).
/// Stops on relative objective change <= tol; with `fixed_point` the prox
/// residual must also be <= 10 tol.
LassoRun run_lasso(const ConvolutionModel& model, double lambda, const CVector& x0, int max_iters, double tol,
                   bool fixed_point = false);

double l1_norm(const CVector& x);

}  // namespace maskbd::detail
