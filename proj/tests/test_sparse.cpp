#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "maskbd/experiments.hpp"
#include "oracles.hpp"

using namespace maskbd;

namespace {

// (1/L) sum_l conj(d_lj) y_l[(j + k) mod n]
CMatrix spectral_oracle(const CMatrix& Y, const CMatrix& D) {
  const Index n = Y.rows(), L = Y.cols();
  CMatrix H = CMatrix::Zero(n, n);
  for (Index l = 0; l < L; ++l) H += D.col(l).conjugate().asDiagonal() * oracle::circulant(Y.col(l), true);
  return H / static_cast<double>(L);
}

// Dense normal-equation pieces of (1/2L) sum_l ||C_h diag(d_l) z - y_l||^2.
struct Quadratic {
  CMatrix G;
  CVector b;
};

Quadratic lasso_quadratic(const CVector& h, const CMatrix& D, const CMatrix& Y) {
  const Index n = h.size(), L = D.cols();
  const CMatrix C = oracle::circulant(h, false);
  Quadratic q{CMatrix::Zero(n, n), CVector::Zero(n)};
  for (Index l = 0; l < L; ++l) {
    const CMatrix A = C * D.col(l).asDiagonal();
    q.G += A.adjoint() * A;
    q.b += A.adjoint() * Y.col(l);
  }
  q.G /= static_cast<double>(L);
  q.b /= static_cast<double>(L);
  return q;
}

std::vector<Index> top_k(const CVector& v, Index k) {
  std::vector<Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](Index a, Index b) { return std::abs(v[a]) > std::abs(v[b]); });
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

ExperimentConfig sparse_config(Index n, Index K, Index h_width, bool separated) {
  ExperimentConfig c;
  c.n = n;
  c.K = K;
  c.separated = separated;
  for (Index j = 0; j < h_width; ++j) c.h_support.push_back(j);
  return c;
}

}  // namespace

TEST_CASE("spectral matrix matches its definition") {
  std::mt19937_64 rng(41);
  const MaskSet ms = sample_mask_set(MaskDistribution::quaternary_phase(), 12, 3, 1);
  const MeasurementSet meas =
      forward_time(Signal(oracle::random_vector(12, rng)), Signal(oracle::random_vector(12, rng)), ms);
  const CMatrix expect = spectral_oracle(meas.time_obs, ms.stacked());
  CHECK(oracle::rel_err(spectral_matrix(meas, ms), expect) <= 1e-12);
  for (Index j : {0, 5, 11}) CHECK(oracle::rel_err(spectral_row(meas, ms, j), CVector(expect.row(j).transpose())) <= 1e-12);
  const SpectralInit s = spectral_init_h(meas, ms);
  REQUIRE(s.H.has_value());
  Index best = 0;
  for (Index j = 1; j < 12; ++j)
    if (expect.row(j).norm() > expect.row(best).norm()) best = j;
  CHECK(s.j_sharp == best);
  CHECK(oracle::rel_err(s.h0.values(), CVector(expect.row(best).transpose().normalized())) <= 1e-12);
}

TEST_CASE("spectral rows for large n use the Gram identity") {
  std::mt19937_64 rng(42);
  const Index n = 1100, L = 2;
  const MaskSet ms = sample_mask_set(MaskDistribution::rademacher(), n, L, 2);
  CVector x = CVector::Zero(n);
  x[7] = 1.5;
  x[400] = -0.7;
  CVector h = CVector::Zero(n);
  h.head(20) = oracle::random_vector(20, rng);
  const MeasurementSet meas = forward_time(Signal(h), Signal(x), ms);
  const SpectralInit s = spectral_init_h(meas, ms);
  CHECK_FALSE(s.H.has_value());
  REQUIRE(s.row_norms.size() == n);
  for (Index j : {0, 7, 400, 1099}) {
    CVector row(n);
    for (Index k = 0; k < n; ++k) {
      cplx acc = 0.0;
      for (Index l = 0; l < L; ++l) acc += std::conj(ms.stacked()(j, l)) * meas.time_obs((j + k) % n, l);
      row[k] = acc / static_cast<double>(L);
    }
    CHECK(std::abs(s.row_norms[j] - row.norm()) <= 1e-9 * row.norm());
    CHECK(oracle::rel_err(spectral_row(meas, ms, j), row) <= 1e-12);
  }
}

TEST_CASE("one-sparse input gives the exact kernel direction") {
  std::mt19937_64 rng(43);
  for (auto kind : {MaskKind::rademacher, MaskKind::quaternary_phase}) {
    const auto dist = kind == MaskKind::rademacher ? MaskDistribution::rademacher() : MaskDistribution::quaternary_phase();
    const MaskSet ms = sample_mask_set(dist, 20, 4, 3);
    const CVector h = oracle::random_vector(20, rng);
    CVector x = CVector::Zero(20);
    x[0] = cplx(-1.3, 0.4);
    const SpectralInit s = spectral_init_h(forward_time(Signal(h), Signal(x), ms), ms);
    CHECK(s.j_sharp == 0);
    CHECK(phase_dist(s.h0.values(), h.normalized()) <= 1e-12);
  }
}

TEST_CASE("spectral matrix averages to x h^T") {
  std::mt19937_64 rng(44);
  const Index n = 16;
  const CVector h = oracle::random_vector(n, rng, false);
  CVector x = CVector::Zero(n);
  x[2] = 1.1;
  x[9] = -0.8;
  x[13] = 0.5;
  CMatrix mean = CMatrix::Zero(n, n);
  for (int draw = 0; draw < 2000; ++draw) {
    const MaskSet ms = sample_mask_set(MaskDistribution::rademacher(), n, 8, 1000 + draw);
    mean += spectral_matrix(forward_time(Signal(h), Signal(x), ms), ms);
  }
  mean /= 2000.0;
  CHECK(oracle::rel_err(mean, CMatrix(x * h.transpose())) <= 0.05);
}

TEST_CASE("spectral initializer improves with more masks") {
  const ExperimentConfig cfg = sparse_config(32, 3, 8, true);
  std::vector<double> medians;
  for (Index L : {4, 16, 64, 256}) {
    std::vector<double> d;
    for (int t = 0; t < 20; ++t) {
      const Instance in = make_instance(cfg, L, std::nullopt, t);
      d.push_back(phase_dist(spectral_init_h(in.meas, in.masks).h0.values(), CVector(in.h.values().normalized())));
    }
    std::sort(d.begin(), d.end());
    medians.push_back(0.5 * (d[9] + d[10]));
  }
  for (std::size_t k = 1; k < medians.size(); ++k) CHECK(medians[k] < medians[k - 1]);
}

TEST_CASE("spectral initializer rejects empty data") {
  const MaskSet ms = sample_mask_set(MaskDistribution::rademacher(), 8, 2, 4);
  const MeasurementSet meas = forward_time(Signal(CVector(CVector::Zero(8))), Signal(CVector(CVector::Ones(8))), ms);
  CHECK_THROWS_AS(spectral_init_h(meas, ms), DegenerateInputError);
}

TEST_CASE("lasso shrinks to zero above the threshold") {
  std::mt19937_64 rng(45);
  const MaskSet ms = sample_mask_set(MaskDistribution::quaternary_phase(), 16, 4, 5);
  const CVector h = oracle::random_vector(16, rng).normalized();
  const MeasurementSet meas = forward_time(Signal(oracle::random_vector(16, rng)), Signal(oracle::random_vector(16, rng)), ms);
  const Quadratic q = lasso_quadratic(h, ms.stacked(), meas.time_obs);
  LassoConfig cfg;
  cfg.lambda = q.b.cwiseAbs().maxCoeff() * (1.0 + 1e-9);
  const SolverReport r = solve_lasso(meas, ms, Signal(h), cfg);
  CHECK(r.x->values().cwiseAbs().maxCoeff() == 0.0);
  cfg.lambda = q.b.cwiseAbs().maxCoeff() * 0.5;
  CHECK(solve_lasso(meas, ms, Signal(h), cfg).x->values().cwiseAbs().maxCoeff() > 0.0);
  CHECK_THROWS_AS(solve_lasso(meas, ms, Signal(CVector(2.0 * h)), cfg), PreconditionError);
}

TEST_CASE("lasso with the true kernel recovers the sparse signal") {
  const ExperimentConfig cfg = sparse_config(32, 3, 0, false);
  LassoConfig lc;
  lc.lambda = 1e-6;
  for (int t = 0; t < 20; ++t) {
    CAPTURE(t);
    const Instance in = make_instance(cfg, 8, std::nullopt, t);
    const double hn = in.h.norm();
    const SolverReport r = solve_lasso(in.meas, in.masks, Signal(CVector(in.h.values() / hn)), lc);
    const CVector target = hn * in.x.values();
    CHECK(top_k(r.x->values(), 3) == in.x_support);
    CHECK(phase_dist(r.x->values(), target) <= 1e-3 * target.norm());
  }
}

TEST_CASE("lasso objective and fixed point") {
  std::mt19937_64 rng(46);
  const Index n = 32;
  const MaskSet ms = sample_mask_set(MaskDistribution::rademacher(), n, 6, 6);
  const CVector h = oracle::random_vector(n, rng).normalized();
  CVector x = CVector::Zero(n);
  x[3] = 2.0;
  x[20] = cplx(0.0, -1.0);
  const MeasurementSet meas = add_awgn(forward_time(Signal(h), Signal(x), ms), 30.0, 3);
  LassoConfig cfg;
  cfg.lambda = 1e-3;
  const SolverReport r = solve_lasso(meas, ms, Signal(h), cfg);
  CHECK(r.converged);
  for (std::size_t k = 1; k < r.objective_history.size(); ++k)
    CHECK(r.objective_history[k] <= r.objective_history[k - 1] + 1e-15 * std::abs(r.objective_history[0]));

  const Quadratic q = lasso_quadratic(h, ms.stacked(), meas.time_obs);
  const double step = 1.0 / (1.05 * Eigen::SelfAdjointEigenSolver<CMatrix>(q.G).eigenvalues().maxCoeff());
  const CVector xs = r.x->values();
  const CVector grad = q.G * xs - q.b;
  const CVector fixed = soft_threshold(CVector(xs - step * grad), step * cfg.lambda);
  CHECK((xs - fixed).norm() <= 10.0 * cfg.tol);
}

TEST_CASE("lasso curvature band") {
  std::mt19937_64 rng(47);
  const Index n = 64;
  const CVector h0 = oracle::random_vector(n, rng).normalized();
  const double mu = coherence_mu(Signal(h0));
  const auto L = static_cast<Index>(std::ceil(64.0 * mu));
  const MaskSet ms = sample_mask_set(MaskDistribution::rademacher(), n, L, 7);
  int inside = 0;
  for (int k = 0; k < 200; ++k) {
    const CVector z = oracle::random_vector(n, rng);
    double e = 0.0;
    for (Index l = 0; l < L; ++l) e += circular_convolve(Signal(h0), Signal(CVector(ms.column(l).cwiseProduct(z)))).values().squaredNorm();
    const double q = e / static_cast<double>(L) / z.squaredNorm();
    inside += (q >= 0.7 && q <= 1.3);
  }
  CHECK(inside == 200);
}

TEST_CASE("split initialization") {
  std::mt19937_64 rng(48);
  const MaskSet ms = sample_mask_set(MaskDistribution::rademacher(), 16, 2, 8);
  CVector x = CVector::Zero(16);
  x[4] = 1.0;
  x[11] = -2.0;
  const CVector h = oracle::random_vector(16, rng);
  const MeasurementSet meas = forward_time(Signal(h), Signal(x), ms);
  LassoConfig cfg;
  const SplitInit s = split_init(meas, ms, cfg);
  const MaskSet first = ms.subset(0, 1);
  const SpectralInit direct = spectral_init_h(meas.subset(0, 1), first);
  CHECK(s.j0 == direct.j_sharp);
  CHECK(oracle::rel_err(s.h0.values(), direct.h0.values()) <= 1e-15);
  CHECK(s.lasso.iterations > 0);
  const SolverReport second = solve_lasso(meas.subset(1, 1), ms.subset(1, 1), s.h0, cfg);
  CHECK(oracle::rel_err(s.x0.values(), second.x->values()) <= 1e-15);

  CHECK_THROWS_AS(split_init(meas.subset(0, 1), ms.subset(0, 1), cfg), ArgumentError);
}

TEST_CASE("split initializer recovers the kernel direction on separated supports") {
  ExperimentConfig cfg = sparse_config(50, 3, 10, true);
  int good = 0;
  for (int t = 0; t < 20; ++t) {
    const Instance in = make_instance(cfg, 10, std::nullopt, t);
    const SplitInit s = split_init(in.meas, in.masks, LassoConfig{});
    good += phase_dist(s.h0.values(), CVector(in.h.values().normalized())) <= 0.2;
  }
  CHECK(good >= 18);
}

TEST_CASE("palm objective matches the direct sum") {
  std::mt19937_64 rng(49);
  const Index n = 10, L = 3;
  const MaskSet ms = sample_mask_set(MaskDistribution::quaternary_phase(), n, L, 9);
  const MeasurementSet meas = forward_time(Signal(oracle::random_vector(n, rng)), Signal(oracle::random_vector(n, rng)), ms);
  const CVector h = oracle::random_vector(n, rng), x = oracle::random_vector(n, rng);
  double f = 0.0;
  for (Index l = 0; l < L; ++l)
    f += (oracle::convolve(h, ms.column(l).cwiseProduct(x)) - meas.time_obs.col(l)).squaredNorm();
  f = f / (2.0 * L) + 0.25 * x.cwiseAbs().sum();
  CHECK(palm_objective(meas, ms, h, x, 0.25) == doctest::Approx(f).epsilon(1e-12));
}

TEST_CASE("palm started at the truth stays put") {
  const ExperimentConfig cfg = sparse_config(50, 3, 10, false);
  const Instance in = make_instance(cfg, 6, std::nullopt, 0);
  PalmConfig pc;
  pc.max_iters = 30;
  const SolverReport r = palm_from(in.meas, in.masks, pc, in.h.values(), in.x.values());
  CHECK(r.monotone);
  for (double v : r.objective_history) CHECK(v <= r.objective_history.front() + 1e-12);
  CHECK(phase_dist(r.h->values(), in.h.values()) <= 1e-6 * in.h.norm());
}

TEST_CASE("palm initial points") {
  const ExperimentConfig cfg = sparse_config(50, 3, 10, false);
  const Instance in = make_instance(cfg, 4, std::nullopt, 1);
  PalmConfig pc;
  pc.max_iters = 5;

  pc.init_mode = InitMode::deterministic;
  const SolverReport det = palm(in.meas, in.masks, pc);
  CVector e1 = CVector::Zero(50);
  e1[0] = 1.0;
  CHECK(det.h_init->values() == e1);
  CHECK_FALSE(det.warnings.empty());
  CHECK(det.objective_history.size() == static_cast<std::size_t>(det.iterations + 1));

  pc.init_mode = InitMode::randomized;
  pc.seed = 5;
  const SolverReport a = palm(in.meas, in.masks, pc);
  const SolverReport b = palm(in.meas, in.masks, pc);
  CHECK(a.h_init->values() == b.h_init->values());
  CHECK(a.h_init->values().imag().norm() == 0.0);
  CHECK(a.objective_history == b.objective_history);
  pc.field = Field::complex;
  CHECK(palm(in.meas, in.masks, pc).h_init->values().imag().norm() > 0.0);

  pc.init_mode = InitMode::constructed;
  const SolverReport c = palm(in.meas, in.masks, pc);
  const SplitInit s = split_init(in.meas, in.masks, pc.inner);
  CHECK(c.h_init->values() == s.h0.values());
  for (const auto* r : {&det, &a, &c}) CHECK(r->monotone);
  CHECK_THROWS_AS(palm(in.meas.subset(0, 1), in.masks.subset(0, 1), pc), ArgumentError);

  const SolverReport ls = least_squares_baseline(in.meas, in.masks, pc);
  CHECK(ls.solver == "ls");
  CHECK(ls.h_init->values() == e1);

  PalmConfig bad;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(palm(in.meas, in.masks, bad), ValidationError);
}
