#include <filesystem>

#include "doctest.h"
#include "maskbd/lifting.hpp"
#include "oracles.hpp"

using namespace maskbd;

namespace {

MaskSet masks(Index n, Index L, std::uint64_t seed, MaskKind kind = MaskKind::quaternary_phase) {
  const auto dist = kind == MaskKind::rademacher ? MaskDistribution::rademacher() : MaskDistribution::quaternary_phase();
  return sample_mask_set(dist, n, L, seed);
}

}  // namespace

TEST_CASE("forward model in the time domain") {
  std::mt19937_64 rng(21);
  const MaskSet ms = masks(9, 3, 1);
  const CVector x = oracle::random_vector(9, rng);
  CVector e1 = CVector::Zero(9);
  e1[0] = 1.0;

  const MeasurementSet a = forward_time(Signal(e1), Signal(x), ms);
  for (Index l = 0; l < 3; ++l) CHECK(oracle::rel_err(CVector(a.time_obs.col(l)), ms.column(l).cwiseProduct(x)) <= 1e-13);

  const CVector h = oracle::random_vector(9, rng);
  const MeasurementSet b = forward_time(Signal(h), Signal(e1), ms);
  for (Index l = 0; l < 3; ++l) CHECK(oracle::rel_err(CVector(b.time_obs.col(l)), CVector(ms.column(l)[0] * h)) <= 1e-13);

  const MaskSet m4 = masks(4, 2, 2);
  const CVector h4 = oracle::random_vector(4, rng), x4 = oracle::random_vector(4, rng);
  const MeasurementSet c = forward_time(Signal(h4), Signal(x4), m4);
  for (Index l = 0; l < 2; ++l) {
    const CVector expect = oracle::convolve(h4, m4.column(l).cwiseProduct(x4));
    CHECK(oracle::rel_err(CVector(c.time_obs.col(l)), expect) <= 1e-12);
    CHECK(oracle::rel_err(CVector(c.freq_obs.col(l)), CVector(oracle::dft(4) * expect / std::sqrt(2.0))) <= 1e-10);
  }
  CHECK(c.mask_fingerprint == m4.fingerprint());
  CHECK_THROWS_AS(forward_time(Signal(h), Signal(x4), m4), DimensionError);
  CHECK_THROWS_AS(forward_time(Signal(h4), Signal(x4), m4, CMatrix::Zero(4, 3)), DimensionError);
}

TEST_CASE("lifted operator") {
  std::mt19937_64 rng(22);
  const MaskSet ms = masks(6, 3, 3);
  CHECK(apply_A(CMatrix::Zero(6, 6), ms).norm() == 0.0);

  const CVector hh = oracle::random_vector(6, rng), x = oracle::random_vector(6, rng);
  const CMatrix AX = apply_A(hh * x.transpose(), ms);
  for (Index l = 0; l < 3; ++l) {
    const CVector expect = hh.cwiseProduct(oracle::dft(6) * ms.column(l).cwiseProduct(x)) / std::sqrt(3.0);
    CHECK(oracle::rel_err(CVector(AX.col(l)), expect) <= 1e-12);
  }

  const CMatrix X = oracle::random_matrix(6, 6, rng);
  CHECK(oracle::rel_err(apply_A(X, ms), oracle::apply_A(X, ms.stacked())) <= 1e-11);

  const CMatrix X2 = oracle::random_matrix(6, 6, rng);
  const cplx a(0.3, -1.2), b(2.0, 0.5);
  CHECK((apply_A(a * X + b * X2, ms) - a * apply_A(X, ms) - b * apply_A(X2, ms)).norm() <= 1e-12 * X.norm() * 10);
  CHECK_THROWS_AS(apply_A(CMatrix::Zero(5, 6), ms), DimensionError);
}

TEST_CASE("adjoint of the lifted operator") {
  std::mt19937_64 rng(23);
  const MaskSet ms = masks(6, 3, 4);
  CHECK(apply_A_adjoint(CMatrix::Zero(6, 3), ms).norm() == 0.0);
  const CMatrix X = oracle::random_matrix(6, 6, rng), Y = oracle::random_matrix(6, 3, rng);
  const cplx lhs = oracle::inner(apply_A(X, ms), Y), rhs = oracle::inner(X, apply_A_adjoint(Y, ms));
  CHECK(std::abs(lhs - rhs) <= 1e-11 * std::abs(lhs));

  const MaskSet m4 = masks(4, 2, 5);
  const CMatrix Y4 = oracle::random_matrix(4, 2, rng);
  CHECK(oracle::rel_err(apply_A_adjoint(Y4, m4), oracle::apply_A_adjoint(Y4, m4.stacked())) <= 1e-11);

  for (int t = 0; t < 100; ++t) {
    const Index n = 2 + t % 31, L = 1 + t % 8;
    const MaskSet m = masks(n, L, 100 + t, t % 2 ? MaskKind::rademacher : MaskKind::quaternary_phase);
    const CMatrix A = oracle::random_matrix(n, n, rng), B = oracle::random_matrix(n, L, rng);
    const cplx p = oracle::inner(apply_A(A, m), B), q = oracle::inner(A, apply_A_adjoint(B, m));
    CHECK(std::abs(p - q) <= 1e-10 * std::abs(p));
  }
}

TEST_CASE("measurement consistency and noise bookkeeping") {
  std::mt19937_64 rng(24);
  const Index n = 16, L = 5;
  const MaskSet ms = masks(n, L, 6);
  const CVector h = oracle::random_vector(n, rng), x = oracle::random_vector(n, rng);
  const MeasurementSet clean = forward_time(Signal(h), Signal(x), ms);
  const MeasurementSet noisy = add_awgn(clean, 15.0, 77);
  REQUIRE(noisy.noise.has_value());
  REQUIRE(noisy.noise_freq.has_value());
  const CVector hh = oracle::dft(n) * h;
  const CMatrix expect = apply_A(hh * x.transpose(), ms) + *noisy.noise_freq;
  CHECK(oracle::rel_err(noisy.freq_obs, expect) <= 1e-10);
  CHECK(noisy.noise_freq->norm() == doctest::Approx(std::sqrt(double(n) / L) * noisy.noise->norm()).epsilon(1e-12));
  CHECK(oracle::rel_err(CMatrix(noisy.time_obs - clean.time_obs), *noisy.noise) <= 1e-14);

  const MeasurementSet same = add_awgn(clean, kNoNoise, 1);
  CHECK(same.noise->norm() == 0.0);
  CHECK(same.time_obs == clean.time_obs);

  const MeasurementSet sub = noisy.subset(1, 3);
  CHECK(sub.count() == 3);
  CHECK(sub.time_obs == noisy.time_obs.middleCols(1, 3));
  CHECK(oracle::rel_err(sub.freq_obs, normalized_spectrum(sub.grid, sub.time_obs)) <= 1e-14);

  CHECK_THROWS_AS(add_awgn(clean, std::numeric_limits<double>::quiet_NaN(), 1), ArgumentError);
}

TEST_CASE("awgn hits the requested power ratio") {
  std::mt19937_64 rng(25);
  const Index n = 32, L = 4;
  const MaskSet ms = masks(n, L, 7);
  const MeasurementSet clean =
      forward_time(Signal(oracle::random_vector(n, rng)), Signal(oracle::random_vector(n, rng)), ms);
  for (double snr : {10.0, 0.0}) {
    double mean = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s)
      mean += add_awgn(clean, snr, s).noise->squaredNorm() / clean.time_obs.squaredNorm();
    mean /= 100.0;
    const double target = std::pow(10.0, -snr / 10.0);
    CHECK(std::abs(mean - target) <= 0.1 * target);
  }
}

TEST_CASE("adversarial noise construction") {
  std::mt19937_64 rng(26);
  const Index n = 64, L = 8;
  for (int trial = 0; trial < 5; ++trial) {
    const MaskSet ms = masks(n, L, 200 + trial, MaskKind::rademacher);
    const CVector hh = oracle::random_vector(n, rng).normalized(), x = oracle::random_vector(n, rng).normalized();
    const AdversarialNoise adv = adversarial_noise(hh, x, ms, 1.0);
    CHECK(apply_A(adv.w, ms).norm() <= 1e-9 * adv.w.norm());

    const CMatrix truth = hh * x.transpose();
    const TangentProjector P(hh, x);
    const double cond1_lhs = -oracle::inner(truth, adv.x0).real();
    const double cond1_rhs = nuclear_norm(project_tangent(adv.x0, P, TangentPart::Tperp));
    CHECK(cond1_lhs >= cond1_rhs);
    const double cond2 = std::sqrt(double(n)) * apply_A(adv.x0, ms).norm() /
                         (8.0 * std::sqrt(2.0) * std::sqrt(L * std::log(double(n))) * adv.x0.norm());
    CHECK(cond2 <= 1.0);

    const CMatrix certified = truth + adv.x_tilde;
    const CMatrix Yhat = apply_A(truth, ms) + adv.noise_freq;
    CHECK((Yhat - apply_A(certified, ms)).norm() <= 1e-12 * Yhat.norm());
    CHECK(nuclear_norm(certified) <= 1.0 + 1e-8);
    CHECK(adv.t_used > 0.0);
    CHECK(adv.t_used <= 1.0);
  }

  const MaskSet ms = masks(16, 3, 9, MaskKind::rademacher);
  const CVector hh = oracle::random_vector(16, rng).normalized(), x = oracle::random_vector(16, rng).normalized();
  CHECK(adversarial_noise(hh, x, ms, 0.0).noise_freq.norm() == 0.0);

  const CVector inside = ms.column(1).conjugate().normalized();
  CHECK_THROWS_AS(adversarial_noise(hh, inside, ms, 1.0), DegenerateInputError);
  CVector shifted = hh;
  shifted[0] = 0.0;
  shifted.normalize();
  CHECK_THROWS_AS(adversarial_noise(shifted, x, ms, 1.0), PreconditionError);
  CHECK_THROWS_AS(adversarial_noise(CVector(2.0 * hh), x, ms, 1.0), PreconditionError);
}

TEST_CASE("RIP on the tangent space") {
  std::mt19937_64 rng(27);
  const Index n = 64, L = 64;
  const MaskSet ms = masks(n, L, 10, MaskKind::rademacher);
  const CVector hh = oracle::random_vector(n, rng).normalized(), x = oracle::random_vector(n, rng).normalized();
  const TangentProjector P(hh, x);
  int inside = 0;
  for (int k = 0; k < 50; ++k) {
    CMatrix X = project_tangent(oracle::random_matrix(n, n, rng), P, TangentPart::T);
    X /= X.norm();
    const double e = apply_A(X, ms).squaredNorm();
    inside += (e >= 0.4 && e <= 1.6);
  }
  CHECK(inside == 50);
}

TEST_CASE("measurement files round trip") {
  std::mt19937_64 rng(28);
  const MaskSet ms = masks(12, 3, 11);
  const MeasurementSet meas = add_awgn(
      forward_time(Signal(oracle::random_vector(12, rng)), Signal(oracle::random_vector(12, rng)), ms), 20.0, 5);
  const auto path = std::filesystem::temp_directory_path() / "maskbd_test_meas.bin";
  save_measurements(meas, path);
  const MeasurementSet back = load_measurements(path);
  CHECK(back.time_obs == meas.time_obs);
  CHECK(back.freq_obs == meas.freq_obs);
  CHECK(back.mask_fingerprint == meas.mask_fingerprint);
  CHECK(back.grid == meas.grid);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}
