#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "maskbd/lifting.hpp"

namespace maskbd {

// ---------------------------------------------------------------------------
// Configurations

struct ClsConfig {
  double radius = 1.0;              ///< R in ||X||_* <= R
  int max_iters = 5000;
  std::optional<double> step;       ///< nullopt: 1 / lambda_max(A A^*) = L / sigma_max(D_g)^2
  double tol = 1e-10;               ///< relative objective decrease
  int patience = 5;                 ///< consecutive small decreases before stopping

  void validate() const;
};

struct LassoConfig {
  double lambda = 1e-7;
  int max_iters = 500;
  double tol = 1e-8;

  void validate() const;
};

enum class InitMode { constructed, randomized, deterministic };
enum class Field { real, complex };

std::string to_string(InitMode mode);
InitMode init_mode_from_string(const std::string& name);
std::string to_string(Field field);
Field field_from_string(const std::string& name);

struct PalmConfig {
  double lambda = 1e-7;  ///< 0 turns PALM into plain alternating least squares
  int max_iters = 200;
  InitMode init_mode = InitMode::constructed;
  LassoConfig inner{1e-7, 500, 1e-8};
  double tol = 1e-10;    ///< relative change of the composite objective
  Field field = Field::real;
  std::uint64_t seed = 0;  ///< randomized initialization

  void validate() const;
};

// ---------------------------------------------------------------------------

struct SolverReport {
  std::string solver;
  std::optional<CMatrix> lifted;
  std::optional<Signal> h;
  std::optional<Signal> x;
  std::optional<Signal> h_init;  ///< PALM starting kernel
  std::vector<double> objective_history;
  int iterations = 0;
  bool converged = false;
  bool monotone = true;
  double wall_time_s = 0.0;
  std::vector<std::string> warnings;
};

/// JSON view of a report; history longer than `max_history` is decimated
/// (first and last entries always kept). Estimates are not embedded.
nlohmann::json to_json(const SolverReport& report, std::size_t max_history = 1000);

nlohmann::json to_json(const ClsConfig& cfg);
nlohmann::json to_json(const LassoConfig& cfg);
nlohmann::json to_json(const PalmConfig& cfg);

// ---------------------------------------------------------------------------
// Lifted model

/// Frobenius projection onto {||X||_* <= radius}.
CMatrix project_nuclear_ball(const CMatrix& X, double radius);

/// Projection of a nonnegative vector onto {s >= 0, sum(s) <= radius}.
RVector project_l1_simplex(const RVector& s, double radius);

/// Projected gradient on min ||Y_hat - A(X)||_F s.t. ||X||_* <= R, from X = 0.
SolverReport solve_constrained_ls(const MeasurementSet& meas, const MaskSet& ms, const ClsConfig& cfg);

struct Rank1Factors {
  Signal h_hat;  ///< sqrt(sigma) u, frequency domain
  Signal x;      ///< sqrt(sigma) conj(v), so that h_hat x^T = sigma u v^*
  double sigma;
};

Rank1Factors rank1_extract(const CMatrix& X);

// ---------------------------------------------------------------------------
// Sparse regime

struct SpectralInit {
  std::optional<CMatrix> H;  ///< dense H, only formed for n <= kDenseSpectralLimit
  RVector row_norms;
  Index j_sharp = 0;
  Signal h0;
};

inline constexpr Index kDenseSpectralLimit = 1024;

/// Row j of H = (1/L) sum_l conj(D_l) C-check_{y_l}.
CVector spectral_row(const MeasurementSet& meas, const MaskSet& ms, Index j);

/// Dense H (n <= kDenseSpectralLimit).
CMatrix spectral_matrix(const MeasurementSet& meas, const MaskSet& ms);

/// Picks the l2-largest row of H (ties: smallest index) and normalizes it.
SpectralInit spectral_init_h(const MeasurementSet& meas, const MaskSet& ms);

/// min (1/2L) sum_l ||h0 (*) (d_l .* x) - y_l||^2 + lambda ||x||_1, from x = 0.
SolverReport solve_lasso(const MeasurementSet& meas, const MaskSet& ms, const Signal& h0, const LassoConfig& cfg);

struct SplitInit {
  Signal h0;
  Signal x0;
  Index j0 = 0;
  SolverReport lasso;
};

/// Kernel direction from the first floor(L/2) observations, sparse signal from
/// a LASSO on the rest.
SplitInit split_init(const MeasurementSet& meas, const MaskSet& ms, const LassoConfig& cfg);

/// Composite objective F(h, x) + lambda ||x||_1 evaluated directly.
double palm_objective(const MeasurementSet& meas, const MaskSet& ms, const CVector& h, const CVector& x,
                      double lambda);

/// PALM with the initialization selected by cfg.init_mode.
SolverReport palm(const MeasurementSet& meas, const MaskSet& ms, const PalmConfig& cfg);

/// PALM from an explicit starting point.
SolverReport palm_from(const MeasurementSet& meas, const MaskSet& ms, const PalmConfig& cfg, const CVector& h0,
                       const CVector& x0);

/// Unregularized alternating minimization from the deterministic start.
SolverReport least_squares_baseline(const MeasurementSet& meas, const MaskSet& ms, PalmConfig cfg);

}  // namespace maskbd
