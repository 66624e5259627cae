#include <filesystem>

#include "doctest.h"
#include "maskbd/experiments.hpp"
#include "oracles.hpp"

using namespace maskbd;

TEST_CASE("2-D circular convolution against the direct sum") {
  std::mt19937_64 rng(61);
  const Grid g{8, 8};
  for (bool complex : {false, true}) {
    const CVector h = oracle::random_vector(64, rng, complex), x = oracle::random_vector(64, rng, complex);
    const CVector got = circular_convolve(Signal(h, g), Signal(x, g)).values();
    CHECK(oracle::rel_err(got, oracle::convolve2d(h, x, 8, 8)) <= 1e-10);
  }
  const Grid r{5, 7};
  const CVector h = oracle::random_vector(35, rng), x = oracle::random_vector(35, rng);
  CHECK(oracle::rel_err(circular_convolve(Signal(h, r), Signal(x, r)).values(), oracle::convolve2d(h, x, 5, 7)) <= 1e-10);
}

TEST_CASE("test images") {
  const Image p = synthetic_phantom(32, 40);
  CHECK(p.pixels.size() == 32 * 40);
  CHECK(p.pixels.minCoeff() >= 0.0);
  CHECK(p.pixels.maxCoeff() <= 1.0);
  CHECK(p.pixels.maxCoeff() > p.pixels.minCoeff());

  const Image f = gaussian_filter(32, 40, 10, 2.0);
  CHECK(f.pixels.sum() == doctest::Approx(1.0).epsilon(1e-14));
  for (Index r = 0; r < 32; ++r)
    for (Index c = 0; c < 40; ++c)
      if (r >= 10 || c >= 10) CHECK(f.pixels[r * 40 + c] == 0.0);
  CHECK(f.pixels.minCoeff() >= 0.0);
  CHECK_THROWS_AS(gaussian_filter(8, 8, 10, 2.0), ArgumentError);
}

TEST_CASE("pgm round trip") {
  Image img{3, 4, RVector(12)};
  for (Index i = 0; i < 12; ++i) img.pixels[i] = -1.0 + 0.25 * static_cast<double>(i);
  const auto path = std::filesystem::temp_directory_path() / "maskbd_test.pgm";
  const PgmScaling s = write_pgm(img, path);
  const Image back = read_pgm(path);
  CHECK(back.rows == 3);
  CHECK(back.cols == 4);
  for (Index i = 0; i < 12; ++i) {
    const double byte = std::round((img.pixels[i] - s.offset) * s.scale);
    CHECK(back.pixels[i] == doctest::Approx(byte / 255.0).epsilon(1e-15));
  }
  CHECK(back.pixels[0] == 0.0);
  CHECK(back.pixels[11] == 1.0);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_pgm(path), FormatError);
}

TEST_CASE("identity chain recovers the image") {
  const Image img = synthetic_phantom(16, 16);
  Image delta{16, 16, RVector::Zero(256)};
  delta.pixels[0] = 1.0;
  const MaskSet ones(CMatrix::Ones(256, 1), MaskDistribution::rademacher(), 0, Grid{16, 16});
  Experiment2dConfig cfg;
  cfg.L = 1;
  cfg.snr_db = kNoNoise;
  cfg.solver = SolverKind::ls;
  cfg.palm.max_iters = 5;
  cfg.palm.inner.tol = 1e-15;
  const Experiment2dResult r = experiment_2d(img, delta, ones, cfg);
  CHECK(r.rmse <= 1e-12);
  CHECK((r.recovered.pixels - img.pixels).norm() <= 1e-12 * img.pixels.norm());
}

TEST_CASE("2-D experiment rejects bad shapes") {
  const Image img = synthetic_phantom(16, 16);
  const Image line = synthetic_phantom(1, 16);
  Experiment2dConfig cfg;
  cfg.L = 2;
  CHECK_THROWS_AS(experiment_2d(line, line, cfg), DimensionError);
  CHECK_THROWS_AS(experiment_2d(img, gaussian_filter(8, 8, 4, 1.0), cfg), DimensionError);
  cfg.solver = SolverKind::cls;
  CHECK_THROWS_AS(experiment_2d(img, gaussian_filter(16, 16, 4, 1.0), cfg), ValidationError);
}

TEST_CASE("small 2-D blind deconvolution runs both solvers") {
  const Image img = synthetic_phantom(16, 16);
  const Image filt = gaussian_filter(16, 16, 4, 1.0);
  Experiment2dConfig cfg;
  cfg.L = 6;
  cfg.palm.max_iters = 10;
  for (auto solver : {SolverKind::palm, SolverKind::ls}) {
    cfg.solver = solver;
    const Experiment2dResult r = experiment_2d(img, filt, cfg);
    CHECK(r.report.monotone);
    CHECK(std::isfinite(r.snr_out_db));
    CHECK(r.recovered.pixels.size() == 256);
  }
}
