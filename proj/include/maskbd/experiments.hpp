#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "maskbd/solvers.hpp"

namespace maskbd {

// ---------------------------------------------------------------------------
// Metrics

/// ||h_est x_est^T - h x^T||_F / ||h x^T||_F without forming either matrix.
double rmse(const CVector& h_est, const CVector& x_est, const CVector& h, const CVector& x);
double rmse(const Signal& h_est, const Signal& x_est, const Signal& h, const Signal& x);

/// -20 log10(rmse); +inf for an exact match.
double snr_out_db(double rmse_value);

inline constexpr double kSuccessThreshold = 1e-3;

// ---------------------------------------------------------------------------
// Configuration

enum class SolverKind { cls, palm, ls, truth };

std::string to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& name);

struct ExperimentConfig {
  Index n = 50;
  std::vector<Index> L{10};
  Index K = 0;  ///< sparsity of x; 0 means dense
  Field field = Field::real;
  MaskKind mask = MaskKind::rademacher;
  std::vector<double> snr_db;  ///< empty: noiseless
  int trials = 20;
  std::uint64_t seed = 1;
  SolverKind solver = SolverKind::cls;
  std::vector<Index> h_support;  ///< empty: all of [0, n)
  bool separated = false;        ///< x support gaps at least the h support width
  std::optional<double> cls_radius;  ///< nullopt: ||h_hat x^T||_* from the truth
  ClsConfig cls;
  PalmConfig palm;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Trials

struct Instance {
  Signal h;
  Signal x;
  std::vector<Index> x_support;
  MaskSet masks;
  MeasurementSet meas;
  std::uint64_t seed = 0;
};

/// Ground truth, masks and measurements of trial `trial` at L masks and the
/// given noise level. Mask and noise streams depend only on (seed, trial), so
/// the masks for L are a prefix of those for L' > L and noise draws are shared
/// across SNR levels.
Instance make_instance(const ExperimentConfig& cfg, Index L, std::optional<double> snr_db, int trial);

struct TrialResult {
  Index L = 0;
  double snr_in_db = 0.0;  ///< +inf when noiseless
  int trial = 0;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double snr_out_db = 0.0;
  bool success = false;
  double dist_h0 = std::numeric_limits<double>::quiet_NaN();
  double lifted_error = std::numeric_limits<double>::quiet_NaN();  ///< ||X# - h_hat x^T||_F (cls)
  double noise_level = 0.0;                                         ///< sqrt(n) ||Z_hat||_F
  int iterations = 0;
  bool monotone = true;
  double wall_time_s = 0.0;
};

TrialResult solve_instance(const ExperimentConfig& cfg, const Instance& inst, int trial);

/// First grid value on each axis.
TrialResult run_trial(const ExperimentConfig& cfg, int trial_index);
TrialResult run_trial(const ExperimentConfig& cfg, Index L, std::optional<double> snr_db, int trial_index);

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { L, snr_db };

std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);

struct SweepCell {
  double axis_value = 0.0;
  std::vector<TrialResult> trials;
  double mean_rmse = 0.0;
  double median_rmse = 0.0;
  double success_rate = 0.0;
  double mean_snr_out_db = 0.0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::L;
  std::vector<SweepCell> cells;
};

SweepResult sweep(const ExperimentConfig& cfg, SweepAxis axis, int jobs = 1);

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);
nlohmann::json to_json(const SweepResult& result);
nlohmann::json to_json(const TrialResult& result);

/// Least-squares slope of y against x.
double regression_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Lower-bound study

struct LowerBoundTrial {
  int trial = 0;
  bool skipped = false;  ///< x lies in span(conj d_l)
  double null_residual = 0.0;  ///< ||A(W)||_F
  double cond1_lhs = 0.0, cond1_rhs = 0.0;
  double cond2_lhs = 0.0, cond2_rhs = 0.0;
  bool cond1 = false, cond2 = false;
  double t_used = 0.0;
  double radius = 0.0;
  double certified_nuclear = 0.0;
  double certified_residual = 0.0;
  double ratio = 0.0;  ///< ||X# - h_hat x^T||_F sqrt(L) / (sqrt(n) ||Z_hat||_F)
  double floor = 0.0;  ///< 1 / (50 sqrt(mu) log^3 n)
  double cls_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct LowerBoundConfig {
  double t = 1.0;
  bool run_cls = true;
};

std::vector<LowerBoundTrial> verify_lower_bound(const ExperimentConfig& cfg, const LowerBoundConfig& lb);
nlohmann::json to_json(const LowerBoundTrial& t);

// ---------------------------------------------------------------------------
// Two-dimensional imaging

struct Image {
  Index rows = 0;
  Index cols = 0;
  RVector pixels;  ///< row-major

  Grid grid() const { return Grid{rows, cols}; }
};

/// Smooth piecewise-constant test image with values in [0, 1].
Image synthetic_phantom(Index rows, Index cols);

/// size x size Gaussian window of width sigma, unit sum, occupying pixels
/// [0, size)^2 of a rows x cols grid.
Image gaussian_filter(Index rows, Index cols, Index size, double sigma);

struct PgmScaling {
  double offset = 0.0;
  double scale = 1.0;  ///< pixel = round((value - offset) * scale)
};

/// Writes P5 with maxval 255 after the linear map that sends [min, max] to [0, 255].
PgmScaling write_pgm(const Image& img, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);  ///< values scaled to [0, 1]

struct Experiment2dConfig {
  Index L = 30;
  double snr_db = 40.0;
  SolverKind solver = SolverKind::palm;  ///< palm or ls
  PalmConfig palm;
  MaskKind mask = MaskKind::rademacher;
  std::uint64_t seed = 1;
};

struct Experiment2dResult {
  double rmse = 0.0;
  double snr_out_db = 0.0;
  Image recovered;
  SolverReport report;
};

Experiment2dResult experiment_2d(const Image& image, const Image& filter, const Experiment2dConfig& cfg);
/// Same with caller-supplied masks on the image grid.
Experiment2dResult experiment_2d(const Image& image, const Image& filter, const MaskSet& masks,
                                 const Experiment2dConfig& cfg);

}  // namespace maskbd
