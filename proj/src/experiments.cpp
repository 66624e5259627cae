#include "maskbd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <mutex>
#include <thread>

namespace maskbd {

namespace {

enum Stream : std::uint64_t { kTrial = 0, kTruth = 1, kMasks = 2, kNoise = 3, kSolver = 4 };

MaskDistribution distribution_for(MaskKind kind) {
  switch (kind) {
    case MaskKind::rademacher:
      return MaskDistribution::rademacher();
    case MaskKind::quaternary_phase:
      return MaskDistribution::quaternary_phase();
    case MaskKind::custom:
      break;
  }
  throw ValidationError("experiments support the rademacher and quaternary_phase masks");
}

cplx draw_entry(Field field, std::mt19937_64& engine, std::normal_distribution<double>& normal) {
  if (field == Field::real) return normal(engine);
  const double re = normal(engine);
  const double im = normal(engine);
  return cplx(re, im) / std::sqrt(2.0);
}

Index cyclic_gap(Index a, Index b, Index n) {
  const Index d = std::abs(a - b) % n;
  return std::min(d, n - d);
}

std::vector<Index> draw_support(Index n, Index K, Index min_gap, std::mt19937_64& engine) {
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  for (int attempt = 0; attempt < 100000; ++attempt) {
    // Partial Fisher-Yates with an explicit index draw keeps the sequence
    // independent of the standard library's shuffle.
    for (Index i = 0; i < K; ++i) {
      std::uniform_int_distribution<Index> pick(i, n - 1);
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(engine))]);
    }
    std::vector<Index> support(all.begin(), all.begin() + K);
    std::sort(support.begin(), support.end());
    bool ok = true;
    for (std::size_t a = 0; a < support.size() && ok; ++a)
      for (std::size_t b = a + 1; b < support.size() && ok; ++b) ok = cyclic_gap(support[a], support[b], n) >= min_gap;
    if (ok) return support;
  }
  throw ArgumentError("cannot place a separated support of size " + std::to_string(K) + " in length " +
                      std::to_string(n));
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

// ---------------------------------------------------------------------------

double rmse(const CVector& h_est, const CVector& x_est, const CVector& h, const CVector& x) {
  if (h_est.size() != h.size() || x_est.size() != x.size()) throw DimensionError("rmse: dimension mismatch");
  const double hn2 = h.squaredNorm();
  const double truth = std::sqrt(hn2) * x.norm();
  if (truth == 0.0) throw ArgumentError("rmse: h x^T is zero");
  // h_est = alpha h + p with p orthogonal to h, so
  // h x^T - h_est x_est^T = h (x - alpha x_est)^T - p x_est^T, an orthogonal sum.
  const cplx alpha = h.dot(h_est) / hn2;
  const CVector p = h_est - alpha * h;
  const double a = std::sqrt(hn2) * (x - alpha * x_est).norm();
  const double b = p.norm() * x_est.norm();
  return std::hypot(a, b) / truth;
}

double rmse(const Signal& h_est, const Signal& x_est, const Signal& h, const Signal& x) {
  return rmse(h_est.values(), x_est.values(), h.values(), x.values());
}

double snr_out_db(double rmse_value) { return -20.0 * std::log10(rmse_value); }

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::cls:
      return "cls";
    case SolverKind::palm:
      return "palm";
    case SolverKind::ls:
      return "ls";
    case SolverKind::truth:
      return "truth";
  }
  return "unknown";
}

SolverKind solver_kind_from_string(const std::string& name) {
  if (name == "cls") return SolverKind::cls;
  if (name == "palm") return SolverKind::palm;
  if (name == "ls") return SolverKind::ls;
  if (name == "truth") return SolverKind::truth;
  throw ValidationError("unknown solver '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (n < 2) throw ValidationError("n must be >= 2");
  if (L.empty()) throw ValidationError("L grid must be non-empty");
  for (Index l : L)
    if (l < 1) throw ValidationError("L values must be >= 1");
  if (K < 0 || K > n) throw ValidationError("K must lie in [0, n]");
  if (trials < 1) throw ValidationError("trials must be >= 1");
  for (double s : snr_db)
    if (std::isnan(s)) throw ValidationError("snr_db values must be numbers");
  for (Index j : h_support)
    if (j < 0 || j >= n) throw ValidationError("h_support index out of range");
  if (separated && K == 0) throw ValidationError("separated support needs K > 0");
  if (cls_radius && !(*cls_radius > 0.0)) throw ValidationError("cls radius must be positive");
  (void)distribution_for(mask);
  palm.validate();
  ClsConfig probe = cls;
  probe.radius = 1.0;
  probe.validate();
}

// ---------------------------------------------------------------------------

Instance make_instance(const ExperimentConfig& cfg, Index L, std::optional<double> snr_db, int trial) {
  cfg.validate();
  const Index n = cfg.n;
  const std::uint64_t trial_seed = derive_seed(cfg.seed, kTrial, static_cast<std::uint64_t>(trial));

  std::mt19937_64 truth_rng(derive_seed(trial_seed, kTruth));
  std::normal_distribution<double> normal;
  std::vector<Index> h_support = cfg.h_support;
  if (h_support.empty()) {
    h_support.resize(static_cast<std::size_t>(n));
    std::iota(h_support.begin(), h_support.end(), Index{0});
  }
  CVector h = CVector::Zero(n);
  for (Index j : h_support) h[j] = draw_entry(cfg.field, truth_rng, normal);

  std::vector<Index> support;
  if (cfg.K == 0) {
    support.resize(static_cast<std::size_t>(n));
    std::iota(support.begin(), support.end(), Index{0});
  } else {
    const auto [lo, hi] = std::minmax_element(h_support.begin(), h_support.end());
    const Index width = cfg.separated ? *hi - *lo + 1 : 1;
    support = draw_support(n, cfg.K, width, truth_rng);
  }
  CVector x = CVector::Zero(n);
  for (Index j : support) x[j] = draw_entry(cfg.field, truth_rng, normal);

  MaskSet masks = sample_mask_set(distribution_for(cfg.mask), n, L, derive_seed(trial_seed, kMasks));
  Signal hs(h), xs(x);
  MeasurementSet meas = forward_time(hs, xs, masks);
  if (snr_db && *snr_db != kNoNoise) meas = add_awgn(meas, *snr_db, derive_seed(trial_seed, kNoise));
  return Instance{std::move(hs), std::move(xs), std::move(support), std::move(masks), std::move(meas), trial_seed};
}

TrialResult solve_instance(const ExperimentConfig& cfg, const Instance& inst, int trial) {
  const auto t0 = std::chrono::steady_clock::now();
  TrialResult r;
  r.L = inst.masks.count();
  r.trial = trial;
  r.seed = inst.seed;
  r.noise_level = inst.meas.noise_freq ? std::sqrt(static_cast<double>(cfg.n)) * inst.meas.noise_freq->norm() : 0.0;

  CVector h_est, x_est;
  switch (cfg.solver) {
    case SolverKind::truth:
      h_est = inst.h.values();
      x_est = inst.x.values();
      break;
    case SolverKind::cls: {
      const CVector h_hat = fft_forward(inst.h.grid(), inst.h.values());
      ClsConfig c = cfg.cls;
      c.radius = cfg.cls_radius.value_or(h_hat.norm() * inst.x.norm());
      SolverReport rep = solve_constrained_ls(inst.meas, inst.masks, c);
      r.iterations = rep.iterations;
      r.monotone = rep.monotone;
      r.lifted_error = (*rep.lifted - h_hat * inst.x.values().transpose()).norm();
      if (rep.lifted->cwiseAbs().maxCoeff() > 0.0) {
        Rank1Factors f = rank1_extract(*rep.lifted);
        h_est = fft_inverse(inst.h.grid(), f.h_hat.values());
        x_est = f.x.values();
      } else {
        h_est = CVector::Zero(cfg.n);
        x_est = CVector::Zero(cfg.n);
      }
      break;
    }
    case SolverKind::palm:
    case SolverKind::ls: {
      PalmConfig p = cfg.palm;
      p.seed = derive_seed(inst.seed, kSolver);
      p.field = cfg.field;
      SolverReport rep = cfg.solver == SolverKind::palm ? palm(inst.meas, inst.masks, p)
                                                        : least_squares_baseline(inst.meas, inst.masks, p);
      r.iterations = rep.iterations;
      r.monotone = rep.monotone;
      h_est = rep.h->values();
      x_est = rep.x->values();
      if (cfg.solver == SolverKind::palm && p.init_mode == InitMode::constructed && rep.h_init) {
        r.dist_h0 = phase_dist(rep.h_init->values(), CVector(inst.h.values() / inst.h.norm()));
      }
      break;
    }
  }
  r.rmse = rmse(h_est, x_est, inst.h.values(), inst.x.values());
  r.snr_out_db = snr_out_db(r.rmse);
  r.success = r.rmse < kSuccessThreshold;
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

TrialResult run_trial(const ExperimentConfig& cfg, Index L, std::optional<double> snr_db, int trial_index) {
  const Instance inst = make_instance(cfg, L, snr_db, trial_index);
  TrialResult r;
  try {
    r = solve_instance(cfg, inst, trial_index);
  } catch (const Error& e) {
    throw NumericalError("trial " + std::to_string(trial_index) + " (L=" + std::to_string(L) + "): " + e.what());
  }
  r.snr_in_db = snr_db.value_or(kNoNoise);
  return r;
}

TrialResult run_trial(const ExperimentConfig& cfg, int trial_index) {
  const std::optional<double> snr = cfg.snr_db.empty() ? std::nullopt : std::optional<double>(cfg.snr_db.front());
  return run_trial(cfg, cfg.L.front(), snr, trial_index);
}

// ---------------------------------------------------------------------------

std::string to_string(SweepAxis axis) { return axis == SweepAxis::L ? "L" : "snr_db"; }

SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "L") return SweepAxis::L;
  if (name == "snr_db" || name == "snr") return SweepAxis::snr_db;
  throw ValidationError("unknown sweep axis '" + name + "'");
}

SweepResult sweep(const ExperimentConfig& cfg, SweepAxis axis, int jobs) {
  cfg.validate();
  if (axis == SweepAxis::snr_db && cfg.snr_db.empty()) throw ValidationError("snr_db sweep needs a non-empty grid");
  struct Task {
    std::size_t cell;
    int trial;
    Index L;
    std::optional<double> snr;
  };
  SweepResult out;
  out.axis = axis;
  std::vector<Task> tasks;
  const std::optional<double> snr0 = cfg.snr_db.empty() ? std::nullopt : std::optional<double>(cfg.snr_db.front());
  const std::size_t cells = axis == SweepAxis::L ? cfg.L.size() : cfg.snr_db.size();
  for (std::size_t c = 0; c < cells; ++c) {
    SweepCell cell;
    cell.axis_value = axis == SweepAxis::L ? static_cast<double>(cfg.L[c]) : cfg.snr_db[c];
    cell.trials.resize(static_cast<std::size_t>(cfg.trials));
    out.cells.push_back(std::move(cell));
    for (int t = 0; t < cfg.trials; ++t) {
      if (axis == SweepAxis::L) {
        tasks.push_back({c, t, cfg.L[c], snr0});
      } else {
        tasks.push_back({c, t, cfg.L.front(), cfg.snr_db[c]});
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& task = tasks[i];
      try {
        out.cells[task.cell].trials[static_cast<std::size_t>(task.trial)] = run_trial(cfg, task.L, task.snr, task.trial);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = tasks.size();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& cell : out.cells) {
    std::vector<double> errs;
    double snr_sum = 0.0;
    int wins = 0;
    for (const auto& t : cell.trials) {
      errs.push_back(t.rmse);
      snr_sum += t.snr_out_db;
      wins += t.success ? 1 : 0;
    }
    const auto count = static_cast<double>(cell.trials.size());
    cell.mean_rmse = std::accumulate(errs.begin(), errs.end(), 0.0) / count;
    cell.median_rmse = median(errs);
    cell.success_rate = wins / count;
    cell.mean_snr_out_db = snr_sum / count;
  }
  return out;
}

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  out << "axis_name,axis_value,trial,seed,rmse,snr_out_db,success,dist_h0,wall_time_s\n";
  out << std::setprecision(17);
  for (const auto& cell : result.cells) {
    for (const auto& t : cell.trials) {
      out << to_string(result.axis) << ',' << cell.axis_value << ',' << t.trial << ',' << t.seed << ',' << t.rmse
          << ',' << t.snr_out_db << ',' << (t.success ? 1 : 0) << ',' << t.dist_h0 << ',' << t.wall_time_s << '\n';
    }
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const TrialResult& t) {
  return {{"L", t.L},
          {"snr_in_db", finite_or_null(t.snr_in_db)},
          {"trial", t.trial},
          {"seed", t.seed},
          {"rmse", t.rmse},
          {"snr_out_db", finite_or_null(t.snr_out_db)},
          {"success", t.success},
          {"dist_h0", finite_or_null(t.dist_h0)},
          {"lifted_error", finite_or_null(t.lifted_error)},
          {"noise_level", t.noise_level},
          {"iterations", t.iterations},
          {"monotone", t.monotone},
          {"wall_time_s", t.wall_time_s}};
}

nlohmann::json to_json(const SweepResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"axis_value", c.axis_value},
                     {"trials", c.trials.size()},
                     {"mean_rmse", c.mean_rmse},
                     {"median_rmse", c.median_rmse},
                     {"success_rate", c.success_rate},
                     {"mean_snr_out_db", finite_or_null(c.mean_snr_out_db)}});
  }
  return {{"axis", to_string(result.axis)}, {"cells", cells}};
}

double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("regression_slope: need two or more paired points");
  const auto m = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ArgumentError("regression_slope: x values are all equal");
  return sxy / sxx;
}

// ---------------------------------------------------------------------------

std::vector<LowerBoundTrial> verify_lower_bound(const ExperimentConfig& cfg, const LowerBoundConfig& lb) {
  cfg.validate();
  if (cfg.K != 0) throw ValidationError("verify_lower_bound runs on the dense model (K = 0)");
  if (!(lb.t > 0.0)) throw ValidationError("lower_bound.t must be positive");
  const Index n = cfg.n;
  const Index L = cfg.L.front();
  const double dn = static_cast<double>(n);
  std::vector<LowerBoundTrial> out;
  for (int trial = 0; trial < cfg.trials; ++trial) {
    const Instance inst = make_instance(cfg, L, std::nullopt, trial);
    LowerBoundTrial r;
    r.trial = trial;
    CVector h_hat = fft_forward(inst.h.grid(), inst.h.values());
    h_hat.normalize();
    const CVector x = inst.x.values().normalized();
    const double mu = coherence_mu(inst.h);
    r.floor = 1.0 / (50.0 * std::sqrt(mu) * std::pow(std::log(dn), 3));
    AdversarialNoise adv;
    try {
      adv = adversarial_noise(h_hat, x, inst.masks, lb.t);
    } catch (const DegenerateInputError&) {
      r.skipped = true;
      out.push_back(r);
      continue;
    }
    const CMatrix truth = h_hat * x.transpose();
    const TangentProjector proj(h_hat, x);
    const double nu = inst.masks.distribution().nu();
    const auto dL = static_cast<double>(L);

    r.null_residual = apply_A(adv.w, inst.masks).norm();
    r.cond1_lhs = -(truth.conjugate().cwiseProduct(adv.x0)).sum().real();
    r.cond1_rhs = nuclear_norm(project_tangent(adv.x0, proj, TangentPart::Tperp));
    r.cond1 = r.cond1_lhs >= r.cond1_rhs;
    r.cond2_lhs = std::sqrt(dn) * apply_A(adv.x0, inst.masks).norm();
    r.cond2_rhs = 8.0 * std::sqrt(2.0) * nu * std::sqrt(dL * std::log(dn)) * adv.x0.norm();
    r.cond2 = r.cond2_lhs <= r.cond2_rhs;
    r.t_used = adv.t_used;
    r.radius = 1.0;

    const CMatrix certified = truth + adv.x_tilde;
    const CMatrix y_hat = apply_A(truth, inst.masks) + adv.noise_freq;
    r.certified_nuclear = nuclear_norm(certified);
    r.certified_residual = (apply_A(certified, inst.masks) - y_hat).norm();
    const double noise = adv.noise_freq.norm();
    r.ratio = noise > 0.0 ? adv.x_tilde.norm() * std::sqrt(dL) / (std::sqrt(dn) * noise) : 0.0;

    if (lb.run_cls && noise > 0.0) {
      MeasurementSet meas;
      meas.grid = inst.masks.grid();
      meas.freq_obs = y_hat;
      meas.time_obs.resize(n, L);
      for (Index l = 0; l < L; ++l) meas.time_obs.col(l) = fft_inverse(meas.grid, CVector(y_hat.col(l))) * std::sqrt(dL);
      ClsConfig c = cfg.cls;
      c.radius = 1.0;
      const SolverReport rep = solve_constrained_ls(meas, inst.masks, c);
      r.cls_ratio = (*rep.lifted - truth).norm() * std::sqrt(dL) / (std::sqrt(dn) * noise);
    }
    out.push_back(r);
  }
  return out;
}

nlohmann::json to_json(const LowerBoundTrial& t) {
  return {{"trial", t.trial},
          {"skipped", t.skipped},
          {"null_residual", t.null_residual},
          {"cond1", {{"lhs", t.cond1_lhs}, {"rhs", t.cond1_rhs}, {"holds", t.cond1}}},
          {"cond2", {{"lhs", t.cond2_lhs}, {"rhs", t.cond2_rhs}, {"holds", t.cond2}}},
          {"t_used", t.t_used},
          {"radius", t.radius},
          {"certified_nuclear", t.certified_nuclear},
          {"certified_residual", t.certified_residual},
          {"ratio", t.ratio},
          {"floor", t.floor},
          {"cls_ratio", finite_or_null(t.cls_ratio)}};
}

}  // namespace maskbd
