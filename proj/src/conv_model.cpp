#include "conv_model.hpp"

#include <cmath>
#include <random>

namespace maskbd::detail {

namespace {

// Index of (r_j - r_k, c_j - c_k) mod the grid, row-major.
inline Index diff_index(const Grid& g, Index j, Index k) {
  const Index rj = j / g.cols, cj = j % g.cols;
  const Index rk = k / g.cols, ck = k % g.cols;
  const Index r = (rj - rk + g.rows) % g.rows;
  const Index c = (cj - ck + g.cols) % g.cols;
  return r * g.cols + c;
}

}  // namespace

double l1_norm(const CVector& x) { return x.cwiseAbs().sum(); }

ConvolutionModel::ConvolutionModel(const MaskSet& ms, const CMatrix& time_obs)
    : grid_(ms.grid()), masks_(ms.stacked()), dense_(ms.n() <= kDenseLimit), buf_(ms.n()) {
  const Index n = ms.n();
  const Index L = ms.count();
  if (time_obs.rows() != n || time_obs.cols() != L) throw DimensionError("observations do not match the masks");
  y_hat_.resize(n, L);
  for (Index l = 0; l < L; ++l) y_hat_.col(l) = fft_forward(grid_, CVector(time_obs.col(l)));
  c_ = 0.5 * time_obs.squaredNorm() / static_cast<double>(L);
  if (dense_) mask_corr_ = (masks_.conjugate() * masks_.transpose()) / static_cast<double>(L);
  if (!dense_ && masks_.imag().cwiseAbs().maxCoeff() == 0.0) real_masks_ = masks_.real();
  b_ = CVector::Zero(n);
}

void ConvolutionModel::set_kernel(const CVector& h) {
  const Index n = grid_.size();
  const Index L = masks_.cols();
  if (h.size() != n) throw DimensionError("kernel length mismatch");
  const CVector h_hat = fft_forward(grid_, h);
  power_ = h_hat.cwiseAbs2().cast<cplx>();
  spectral_gain_ = h_hat.cwiseAbs2() / static_cast<double>(n * L);

  b_.setZero(n);
  for (Index l = 0; l < L; ++l) {
    buf_ = h_hat.conjugate().cwiseProduct(y_hat_.col(l));
    fft_inverse(grid_, std::span<const cplx>(buf_.data(), n), std::span<cplx>(buf_.data(), n));
    b_ += masks_.col(l).conjugate().cwiseProduct(buf_);
  }
  b_ /= static_cast<double>(L);

  if (dense_) {
    const CVector autocorr = fft_inverse(grid_, power_);
    G_.resize(n, n);
    for (Index k = 0; k < n; ++k)
      for (Index j = 0; j < n; ++j) G_(j, k) = autocorr[diff_index(grid_, j, k)] * mask_corr_(j, k);
  }
}

void ConvolutionModel::gram(const CVector& z, CVector& out) const {
  if (dense_) {
    out.noalias() = G_ * z;
    return;
  }
  const Index n = grid_.size();
  const std::span<cplx> buf(buf_.data(), n);
  out.setZero(n);
  for (Index l = 0; l < masks_.cols(); ++l) {
    if (real_masks_.size() != 0) {
      buf_.array() = z.array() * real_masks_.col(l).array();
    } else {
      buf_.array() = z.array() * masks_.col(l).array();
    }
    fft_forward(grid_, buf, buf);
    buf_.array() *= spectral_gain_.array();
    fft_backward(grid_, buf, buf);
    if (real_masks_.size() != 0) {
      out.array() += buf_.array() * real_masks_.col(l).array();
    } else {
      out.array() += buf_.array() * masks_.col(l).array().conjugate();
    }
  }
}

double ConvolutionModel::lipschitz() const {
  const Index n = grid_.size();
  int sweeps = 5;
  if (top_.size() != n) {
    std::mt19937_64 engine(0x5eedULL);
    std::normal_distribution<double> normal;
    top_.resize(n);
    for (Index i = 0; i < n; ++i) top_[i] = cplx(normal(engine), normal(engine));
    top_.normalize();
    sweeps = 20;
  }
  CVector w(n);
  double est = 0.0;
  for (int it = 0; it < sweeps; ++it) {
    gram(top_, w);
    est = w.norm();
    if (est == 0.0) break;
    top_ = w / est;
  }
  if (est == 0.0) top_.resize(0);
  return 1.05 * est;
}

LassoRun run_lasso(const ConvolutionModel& model, double lambda, const CVector& x0, int max_iters, double tol,
                   bool fixed_point) {
  const Index n = model.n();
  const CVector& b = model.linear();
  LassoRun run;
  double lip = model.lipschitz();
  if (!(lip > 0.0)) lip = 1.0;

  CVector x = x0, gx(n), y(n), gy(n), z(n), gz(n), grad(n), prox(n);
  model.gram(x, gx);
  double f = model.value(x, gx) + lambda * l1_norm(x);
  run.history.push_back(f);
  y = x;
  gy = gx;
  double t = 1.0;
  bool plain = true;  // y == x

  auto residual = [&](const CVector& point, const CVector& gpoint) {
    grad = gpoint - b;
    soft_threshold(point - grad / lip, lambda / lip, prox);
    return (point - prox).norm();
  };

  for (int it = 1; it <= max_iters; ++it) {
    run.iterations = it;
    grad = gy - b;
    // Differences of the quadratic are formed from Gram products; the
    // expanded values cancel against the constant term near the optimum.
    for (int bt = 0; bt < 60; ++bt) {
      soft_threshold(y - grad / lip, lambda / lip, z);
      model.gram(z, gz);
      const CVector dz = z - y;
      const double curvature = dz.dot(gz - gy).real();
      if (curvature <= lip * dz.squaredNorm() * (1.0 + 1e-12)) break;
      lip *= 2.0;
    }
    const CVector d = z - x;
    const double delta =
        d.dot(gx - b).real() + 0.5 * d.dot(gz - gx).real() + lambda * (l1_norm(z) - l1_norm(x));

    if (delta > 0.0) {
      if (plain) {
        // A plain proximal step failed to descend: stationary to precision.
        run.converged = true;
        break;
      }
      y = x;
      gy = gx;
      t = 1.0;
      plain = true;
      continue;
    }
    const double fz = model.value(z, gz) + lambda * l1_norm(z);

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double momentum = (t - 1.0) / t_next;
    y = z + momentum * (z - x);
    gy = gz + momentum * (gz - gx);
    plain = momentum == 0.0;
    const double rel = -delta / std::max(std::abs(f), 1e-300);
    x.swap(z);
    gx.swap(gz);
    f = fz;
    t = t_next;
    run.history.push_back(f);

    const double r = residual(x, gx);
    const double r_tol = tol * std::max(1.0, x.norm());
    const bool settled = fixed_point ? r <= 10.0 * tol : true;
    if ((rel <= tol && settled) || r <= r_tol) {
      run.converged = true;
      break;
    }
  }
  run.residual = residual(x, gx);
  run.step = 1.0 / lip;
  run.x = std::move(x);
  return run;
}

}  // namespace maskbd::detail
