#include "maskbd/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "binary_io.hpp"

namespace maskbd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kLiftedMagic = "MBDLIFT1";

std::string dotted(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

bool compatible(const json& def, const json& value) {
  if (def.is_null()) return value.is_null() || value.is_number();
  if (def.is_number()) return value.is_number();
  if (def.is_string()) return value.is_string() || value.is_number();  // "auto" or a number
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_array()) return value.is_array();
  if (def.is_object()) return value.is_object();
  return false;
}

void merge_at(json& tree, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ValidationError((prefix.empty() ? "config" : prefix) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = dotted(prefix, key);
    if (!tree.contains(key)) throw ValidationError("unknown config key '" + path + "'");
    json& slot = tree[key];
    if (slot.is_object()) {
      merge_at(slot, value, path);
      continue;
    }
    json v = value;
    if (slot.is_array() && v.is_number()) v = json::array({v});
    if (!compatible(slot, v)) {
      throw ValidationError(path + ": expected " + std::string(slot.is_null() ? "number or null" : slot.type_name()) +
                            ", got " + v.type_name());
    }
    slot = std::move(v);
  }
}

const json& at_path(const json& tree, const std::string& path) {
  const json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ValidationError("missing config key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

double get_double(const json& tree, const std::string& path) {
  const json& v = at_path(tree, path);
  if (!v.is_number()) throw ValidationError(path + ": expected a number");
  return v.get<double>();
}

long long get_int(const json& tree, const std::string& path) {
  const json& v = at_path(tree, path);
  if (v.is_number_integer() || v.is_number_unsigned()) return v.get<long long>();
  if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return static_cast<long long>(v.get<double>());
  throw ValidationError(path + ": expected an integer");
}

std::uint64_t get_seed(const json& tree, const std::string& path) {
  const json& v = at_path(tree, path);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const long long s = get_int(tree, path);
  if (s < 0) throw ValidationError(path + ": must be non-negative");
  return static_cast<std::uint64_t>(s);
}

std::string get_string(const json& tree, const std::string& path) {
  const json& v = at_path(tree, path);
  if (!v.is_string()) throw ValidationError(path + ": expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& tree, const std::string& path) {
  const json& v = at_path(tree, path);
  if (!v.is_boolean()) throw ValidationError(path + ": expected true or false");
  return v.get<bool>();
}

std::vector<Index> get_index_list(const json& tree, const std::string& path) {
  std::vector<Index> out;
  const json& v = at_path(tree, path);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer()) throw ValidationError(path + "[" + std::to_string(i) + "]: expected an integer");
    out.push_back(v[i].get<Index>());
  }
  return out;
}

std::vector<double> get_double_list(const json& tree, const std::string& path) {
  std::vector<double> out;
  const json& v = at_path(tree, path);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ValidationError(path + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

// Rethrows library validation errors with the config path attached.
template <class F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

json complex_array(const CVector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back({v[i].real(), v[i].imag()});
  return out;
}

CVector complex_vector(const json& arr, const std::string& what) {
  if (!arr.is_array()) throw FormatError(what + ": expected an array of [re, im] pairs");
  CVector v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& e = arr[i];
    if (!e.is_array() || e.size() != 2) throw FormatError(what + ": expected [re, im] pairs");
    v[static_cast<Index>(i)] = cplx(e[0].get<double>(), e[1].get<double>());
  }
  return v;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct Context {
  std::string command;
  json config;
  fs::path out;
  SweepAxis axis = SweepAxis::L;
  int jobs = 1;
};

std::uint64_t trial_seed(const Context& ctx) {
  return derive_seed(get_seed(ctx.config, "seed"), 0, static_cast<std::uint64_t>(get_int(ctx.config, "trial")));
}

struct Problem {
  MaskSet masks;
  MeasurementSet meas;
  std::optional<Signal> h, x;  // ground truth when known
  std::optional<double> oracle_radius;
  std::string source;
};

Problem load_or_simulate(const Context& ctx, const ExperimentConfig& cfg) {
  const std::string masks_path = get_string(ctx.config, "inputs.masks");
  const std::string meas_path = get_string(ctx.config, "inputs.measurements");
  const std::string truth_path = get_string(ctx.config, "inputs.truth");
  if (meas_path.empty() != masks_path.empty()) {
    throw ValidationError("inputs.masks and inputs.measurements must be given together");
  }
  if (meas_path.empty()) {
    const std::optional<double> snr = cfg.snr_db.empty() ? std::nullopt : std::optional<double>(cfg.snr_db.front());
    Instance inst = make_instance(cfg, cfg.L.front(), snr, static_cast<int>(get_int(ctx.config, "trial")));
    const CVector h_hat = fft_forward(inst.h.grid(), inst.h.values());
    const double radius = h_hat.norm() * inst.x.norm();
    return Problem{std::move(inst.masks), std::move(inst.meas), std::move(inst.h), std::move(inst.x), radius, "simulated"};
  }
  Problem p{load_mask_set(masks_path), load_measurements(meas_path), std::nullopt, std::nullopt, std::nullopt, "files"};
  if (p.meas.mask_fingerprint != 0 && p.meas.mask_fingerprint != p.masks.fingerprint()) {
    throw ValidationError("inputs: measurements were generated with a different mask set");
  }
  if (!truth_path.empty()) {
    const json t = read_json_file(truth_path).at("truth");
    p.h = Signal(complex_vector(t.at("h"), "truth.h"), p.masks.grid());
    p.x = Signal(complex_vector(t.at("x"), "truth.x"), p.masks.grid());
    p.oracle_radius = t.at("radius").get<double>();
  }
  return p;
}

json truth_metrics(const Problem& p, const CVector& h_est, const CVector& x_est) {
  if (!p.h) return json(nullptr);
  const double r = rmse(h_est, x_est, p.h->values(), p.x->values());
  return {{"rmse", r},
          {"snr_out_db", std::isfinite(snr_out_db(r)) ? json(snr_out_db(r)) : json(nullptr)},
          {"success", r < kSuccessThreshold}};
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_masks(const Context& ctx) {
  const ExperimentConfig cfg = experiment_config(ctx.config);
  const MaskDistribution dist =
      cfg.mask == MaskKind::quaternary_phase ? MaskDistribution::quaternary_phase() : MaskDistribution::rademacher();
  // Same stream as the masks of a simulated trial.
  const MaskSet ms = sample_mask_set(dist, cfg.n, cfg.L.front(), derive_seed(trial_seed(ctx), 2));
  save_mask_set(ms, ctx.out / "masks.bin");
  write_json(ctx.out / "gen-masks.json", {{"config", ctx.config},
                                          {"masks", "masks.bin"},
                                          {"n", ms.n()},
                                          {"L", ms.count()},
                                          {"fingerprint", ms.fingerprint()}});
  std::cout << "gen-masks: n=" << ms.n() << " L=" << ms.count() << " kind=" << to_string(cfg.mask)
            << " fingerprint=" << ms.fingerprint() << " -> " << (ctx.out / "masks.bin").string() << "\n";
  return kOk;
}

int cmd_simulate(const Context& ctx) {
  const ExperimentConfig cfg = experiment_config(ctx.config);
  const std::optional<double> snr = cfg.snr_db.empty() ? std::nullopt : std::optional<double>(cfg.snr_db.front());
  const Instance inst = make_instance(cfg, cfg.L.front(), snr, static_cast<int>(get_int(ctx.config, "trial")));
  save_mask_set(inst.masks, ctx.out / "masks.bin");
  save_measurements(inst.meas, ctx.out / "measurements.bin");
  const CVector h_hat = fft_forward(inst.h.grid(), inst.h.values());
  const double radius = h_hat.norm() * inst.x.norm();
  write_json(ctx.out / "simulate.json", {{"config", ctx.config},
                                         {"masks", "masks.bin"},
                                         {"measurements", "measurements.bin"},
                                         {"truth",
                                          {{"h", complex_array(inst.h.values())},
                                           {"x", complex_array(inst.x.values())},
                                           {"x_support", inst.x_support},
                                           {"radius", radius}}},
                                         {"trial_seed", inst.seed}});
  std::cout << "simulate: n=" << cfg.n << " L=" << inst.masks.count() << " K=" << inst.x_support.size()
            << " snr_db=" << (snr ? fmt(*snr) : std::string("inf")) << " -> " << ctx.out.string() << "\n";
  return kOk;
}

int cmd_solve_cls(const Context& ctx) {
  const ExperimentConfig cfg = experiment_config(ctx.config);
  const Problem p = load_or_simulate(ctx, cfg);
  ClsConfig c = cfg.cls;
  if (cfg.cls_radius) {
    c.radius = *cfg.cls_radius;
  } else if (p.oracle_radius) {
    c.radius = *p.oracle_radius;
  } else {
    throw ValidationError("experiment.cls_radius: required when no ground truth is available");
  }
  const SolverReport rep = solve_constrained_ls(p.meas, p.masks, c);
  save_lifted(*rep.lifted, ctx.out / "lifted.bin");
  json j{{"config", ctx.config}, {"source", p.source}, {"radius", c.radius}, {"report", to_json(rep)},
         {"lifted", "lifted.bin"}};
  CVector h_est = CVector::Zero(p.masks.n()), x_est = CVector::Zero(p.masks.n());
  if (rep.lifted->cwiseAbs().maxCoeff() > 0.0) {
    const Rank1Factors f = rank1_extract(*rep.lifted);
    h_est = fft_inverse(p.masks.grid(), f.h_hat.values());
    x_est = f.x.values();
    j["sigma"] = f.sigma;
  }
  j["h_estimate"] = complex_array(h_est);
  j["x_estimate"] = complex_array(x_est);
  j["metrics"] = truth_metrics(p, h_est, x_est);
  write_json(ctx.out / "solve-cls.json", j);
  std::cout << "solve-cls: iterations=" << rep.iterations << " converged=" << rep.converged
            << " objective=" << fmt(rep.objective_history.back());
  if (p.h) std::cout << " rmse=" << fmt(j["metrics"]["rmse"].get<double>());
  std::cout << "\n";
  return kOk;
}

int cmd_solve_sparse(const Context& ctx) {
  const ExperimentConfig cfg = experiment_config(ctx.config);
  const LassoConfig lasso = lasso_config(ctx.config);
  const Problem p = load_or_simulate(ctx, cfg);
  const SplitInit init = split_init(p.meas, p.masks, lasso);
  json j{{"config", ctx.config},
         {"source", p.source},
         {"j_sharp", init.j0},
         {"h0", complex_array(init.h0.values())},
         {"x0", complex_array(init.x0.values())},
         {"lasso", to_json(init.lasso)},
         {"metrics", truth_metrics(p, init.h0.values(), init.x0.values())}};
  if (p.h) j["metrics"]["dist_h0"] = phase_dist(init.h0.values(), CVector(p.h->values() / p.h->norm()));
  write_json(ctx.out / "solve-sparse.json", j);
  std::cout << "solve-sparse: j#=" << init.j0 << " lasso_iterations=" << init.lasso.iterations;
  if (p.h) std::cout << " dist_h0=" << fmt(j["metrics"]["dist_h0"].get<double>());
  std::cout << "\n";
  return kOk;
}

int cmd_palm(const Context& ctx) {
  const ExperimentConfig cfg = experiment_config(ctx.config);
  const Problem p = load_or_simulate(ctx, cfg);
  PalmConfig pc = cfg.palm;
  pc.seed = derive_seed(trial_seed(ctx), 4);
  pc.field = cfg.field;
  const SolverReport rep = palm(p.meas, p.masks, pc);
  json j{{"config", ctx.config},
         {"source", p.source},
         {"report", to_json(rep)},
         {"h_estimate", complex_array(rep.h->values())},
         {"x_estimate", complex_array(rep.x->values())},
         {"metrics", truth_metrics(p, rep.h->values(), rep.x->values())}};
  write_json(ctx.out / "palm.json", j);
  std::cout << "palm: init=" << to_string(pc.init_mode) << " iterations=" << rep.iterations
            << " monotone=" << rep.monotone << " objective=" << fmt(rep.objective_history.back());
  if (p.h) std::cout << " rmse=" << fmt(j["metrics"]["rmse"].get<double>());
  std::cout << "\n";
  return kOk;
}

int cmd_sweep(const Context& ctx) {
  const ExperimentConfig cfg = experiment_config(ctx.config);
  const SweepResult res = sweep(cfg, ctx.axis, ctx.jobs);
  write_sweep_csv(res, ctx.out / "sweep.csv");
  json j = to_json(res);
  j["config"] = ctx.config;
  j["jobs"] = ctx.jobs;
  write_json(ctx.out / "sweep.json", j);
  const std::string axis = to_string(ctx.axis);
  std::size_t total = 0, successes = 0;
  for (const SweepCell& cell : res.cells) {
    for (const TrialResult& t : cell.trials) {
      std::cout << axis << "=" << fmt(cell.axis_value) << " trial=" << t.trial << " rmse=" << fmt(t.rmse)
                << " snr_out_db=" << fmt(t.snr_out_db) << " success=" << t.success << "\n";
      ++total;
      successes += t.success ? 1 : 0;
    }
    std::cout << axis << "=" << fmt(cell.axis_value) << " success_rate=" << fmt(cell.success_rate)
              << " median_rmse=" << fmt(cell.median_rmse) << " mean_snr_out_db=" << fmt(cell.mean_snr_out_db) << "\n";
  }
  std::cout << "sweep: " << res.cells.size() << " cells, " << total << " trials, " << successes << " successes -> "
            << (ctx.out / "sweep.csv").string() << "\n";
  return kOk;
}

int cmd_lower_bound(const Context& ctx) {
  const ExperimentConfig cfg = experiment_config(ctx.config);
  const LowerBoundConfig lb = lower_bound_config(ctx.config);
  const std::vector<LowerBoundTrial> trials = verify_lower_bound(cfg, lb);
  json arr = json::array();
  int holding = 0, used = 0;
  for (const LowerBoundTrial& t : trials) {
    arr.push_back(to_json(t));
    if (t.skipped) {
      std::cout << "trial=" << t.trial << " skipped (x in span of conj masks)\n";
      continue;
    }
    ++used;
    const bool ok = t.cond1 && t.cond2 && t.ratio >= t.floor;
    holding += ok ? 1 : 0;
    std::cout << "trial=" << t.trial << " null_residual=" << fmt(t.null_residual) << " cond1=" << t.cond1
              << " cond2=" << t.cond2 << " ratio=" << fmt(t.ratio) << " floor=" << fmt(t.floor) << "\n";
  }
  write_json(ctx.out / "verify-lower-bound.json", {{"config", ctx.config}, {"trials", arr}});
  std::cout << "verify-lower-bound: " << holding << "/" << used << " trials satisfy the construction\n";
  return kOk;
}

int cmd_image2d(const Context& ctx) {
  const Experiment2dConfig cfg = image2d_config(ctx.config);
  const std::string image_path = get_string(ctx.config, "image2d.image");
  const Image image = image_path.empty() ? synthetic_phantom(get_int(ctx.config, "image2d.rows"),
                                                             get_int(ctx.config, "image2d.cols"))
                                         : read_pgm(image_path);
  const Image filter = with_path("image2d.filter_size", [&] {
    try {
      return gaussian_filter(image.rows, image.cols, get_int(ctx.config, "image2d.filter_size"),
                             get_double(ctx.config, "image2d.filter_sigma"));
    } catch (const ArgumentError& e) {
      throw ValidationError(e.what());
    }
  });
  const Experiment2dResult res = experiment_2d(image, filter, cfg);
  const PgmScaling in_scale = write_pgm(image, ctx.out / "original.pgm");
  const PgmScaling out_scale = write_pgm(res.recovered, ctx.out / "recovered.pgm");
  write_json(ctx.out / "image2d.json",
             {{"config", ctx.config},
              {"rows", image.rows},
              {"cols", image.cols},
              {"rmse", res.rmse},
              {"snr_out_db", std::isfinite(res.snr_out_db) ? json(res.snr_out_db) : json(nullptr)},
              {"report", to_json(res.report)},
              {"original", {{"path", "original.pgm"}, {"offset", in_scale.offset}, {"scale", in_scale.scale}}},
              {"recovered", {{"path", "recovered.pgm"}, {"offset", out_scale.offset}, {"scale", out_scale.scale}}}});
  std::cout << "image2d: " << image.rows << "x" << image.cols << " L=" << cfg.L << " solver=" << to_string(cfg.solver)
            << " iterations=" << res.report.iterations << " snr_out_db=" << fmt(res.snr_out_db) << "\n";
  return kOk;
}

// Invariant checks that need no test framework.
int cmd_selftest(const Context& ctx) {
  std::mt19937_64 engine(get_seed(ctx.config, "seed"));
  std::normal_distribution<double> normal;
  auto random_vector = [&](Index n) {
    CVector v(n);
    for (Index i = 0; i < n; ++i) v[i] = cplx(normal(engine), normal(engine));
    return v;
  };
  auto random_matrix = [&](Index r, Index c) {
    CMatrix m(r, c);
    for (Index j = 0; j < c; ++j) m.col(j) = random_vector(r);
    return m;
  };
  struct Check {
    std::string name;
    double error;
    double tol;
  };
  std::vector<Check> checks;

  {
    const Index n = 23;
    const CVector h = random_vector(n), x = random_vector(n);
    CVector direct = CVector::Zero(n);
    for (Index j = 0; j < n; ++j)
      for (Index k = 0; k < n; ++k) direct[j] += h[k] * x[(j - k + n) % n];
    const CVector fast = circular_convolve(Signal(h), Signal(x)).values();
    checks.push_back({"convolution", (fast - direct).norm() / direct.norm(), 1e-12});
  }
  {
    const Index n = 12, L = 5;
    const MaskSet ms = sample_mask_set(MaskDistribution::quaternary_phase(), n, L, engine());
    const CMatrix X = random_matrix(n, n), Y = random_matrix(n, L);
    const cplx lhs = apply_A(X, ms).cwiseProduct(Y.conjugate()).sum();
    const cplx rhs = X.cwiseProduct(apply_A_adjoint(Y, ms).conjugate()).sum();
    checks.push_back({"adjoint", std::abs(lhs - rhs) / std::abs(lhs), 1e-10});
  }
  {
    const Index n = 10;
    const CVector u = random_vector(n).normalized(), v = random_vector(n).normalized();
    const TangentProjector proj(u, v);
    const CMatrix X = random_matrix(n, n);
    const CMatrix pt = project_tangent(X, proj, TangentPart::T);
    const CMatrix ptc = project_tangent(X, proj, TangentPart::Tperp);
    const double idem = (project_tangent(pt, proj, TangentPart::T) - pt).norm() / pt.norm();
    const double split = (pt + ptc - X).norm() / X.norm();
    checks.push_back({"projector", std::max(idem, split), 1e-12});
  }
  {
    const Index n = 9;
    const CVector h = random_vector(n), x = random_vector(n);
    const cplx a(0.3, -1.7);
    const double invariant = rmse(CVector(a * h), CVector(x / a), h, x);
    const double zero = std::abs(rmse(CVector::Zero(n), CVector::Zero(n), h, x) - 1.0);
    checks.push_back({"rmse", std::max(invariant, zero), 1e-12});
  }
  {
    CMatrix X = CMatrix::Zero(2, 2);
    X(0, 0) = 3.0;
    X(1, 1) = 1.0;
    CMatrix expected = CMatrix::Zero(2, 2);
    expected(0, 0) = 2.0;
    checks.push_back({"nuclear-projection", (project_nuclear_ball(X, 2.0) - expected).norm(), 1e-12});
  }

  bool all = true;
  json results = json::array();
  for (const Check& c : checks) {
    const bool ok = c.error <= c.tol;
    all = all && ok;
    std::cout << (ok ? "PASS " : "FAIL ") << c.name << " error=" << fmt(c.error) << " tol=" << fmt(c.tol) << "\n";
    results.push_back({{"name", c.name}, {"error", c.error}, {"tol", c.tol}, {"pass", ok}});
  }
  write_json(ctx.out / "selftest.json", {{"config", ctx.config}, {"checks", results}, {"pass", all}});
  std::cout << "selftest: " << (all ? "all checks passed" : "some checks failed") << "\n";
  return all ? kOk : kCheckFailed;
}

const std::map<std::string, std::function<int(const Context&)>>& commands() {
  static const std::map<std::string, std::function<int(const Context&)>> table{
      {"gen-masks", cmd_gen_masks},   {"simulate", cmd_simulate},
      {"solve-cls", cmd_solve_cls},   {"solve-sparse", cmd_solve_sparse},
      {"palm", cmd_palm},             {"sweep", cmd_sweep},
      {"verify-lower-bound", cmd_lower_bound}, {"image2d", cmd_image2d},
      {"selftest", cmd_selftest}};
  return table;
}

// Builds every typed view once so bad values surface before any work.
void validate_all(const json& tree) {
  (void)experiment_config(tree);
  (void)lasso_config(tree);
  (void)lower_bound_config(tree);
  (void)image2d_config(tree);
  (void)get_seed(tree, "seed");
  if (get_int(tree, "trial") < 0) throw ValidationError("trial: must be non-negative");
  if (get_int(tree, "image2d.rows") < 2 || get_int(tree, "image2d.cols") < 2) {
    throw ValidationError("image2d.rows/cols: must be >= 2");
  }
  for (const char* key : {"inputs.masks", "inputs.measurements", "inputs.truth", "image2d.image"}) {
    const std::string path = get_string(tree, key);
    if (!path.empty() && !fs::exists(path)) throw ValidationError(std::string(key) + ": no such file '" + path + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void save_lifted(const CMatrix& X, const fs::path& path) {
  detail::BinaryWriter w(path);
  w.magic(kLiftedMagic);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(X.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(X.cols()));
  w.matrix(X);
  w.finish();
}

CMatrix load_lifted(const fs::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic(kLiftedMagic);
  const auto rows = static_cast<Index>(r.get<std::uint64_t>());
  const auto cols = static_cast<Index>(r.get<std::uint64_t>());
  CMatrix X = r.matrix(rows, cols);
  r.expect_end();
  return X;
}

json default_config() {
  const ExperimentConfig e;
  const ClsConfig c;
  const PalmConfig p;
  const LassoConfig l;
  const LowerBoundConfig lb;
  const Experiment2dConfig i;
  return {
      {"seed", e.seed},
      {"trial", 0},
      {"experiment",
       {{"n", e.n},
        {"L", e.L},
        {"K", e.K},
        {"field", to_string(e.field)},
        {"mask", to_string(e.mask)},
        {"snr_db", json::array()},
        {"trials", e.trials},
        {"solver", to_string(e.solver)},
        {"h_support", json::array()},
        {"separated", e.separated},
        {"cls_radius", nullptr}}},
      {"cls", {{"max_iters", c.max_iters}, {"step", "auto"}, {"tol", c.tol}, {"patience", c.patience}}},
      {"palm",
       {{"lambda", p.lambda},
        {"max_iters", p.max_iters},
        {"init_mode", to_string(p.init_mode)},
        {"tol", p.tol},
        {"inner", {{"max_iters", p.inner.max_iters}, {"tol", p.inner.tol}}}}},
      {"lasso", {{"lambda", l.lambda}, {"max_iters", l.max_iters}, {"tol", l.tol}}},
      {"lower_bound", {{"t", lb.t}, {"run_cls", lb.run_cls}}},
      {"image2d",
       {{"image", ""},
        {"rows", 128},
        {"cols", 128},
        {"filter_size", 10},
        {"filter_sigma", 2.0},
        {"L", i.L},
        {"snr_db", i.snr_db},
        {"solver", to_string(i.solver)},
        {"mask", to_string(i.mask)}}},
      {"inputs", {{"masks", ""}, {"measurements", ""}, {"truth", ""}}},
  };
}

void merge_config(json& tree, const json& patch) { merge_at(tree, patch, ""); }

void apply_override(json& tree, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "': expected key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  // Build {"a": {"b": value}} and merge, so the same checks apply.
  json patch = value;
  std::size_t end = path.size();
  while (true) {
    const std::size_t dot = path.rfind('.', end - 1);
    const std::size_t start = dot == std::string::npos ? 0 : dot + 1;
    const std::string key = path.substr(start, end - start);
    if (key.empty()) throw ValidationError("override '" + assignment + "': empty key");
    patch = json{{key, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_config(tree, patch);
}

ExperimentConfig experiment_config(const json& tree) {
  ExperimentConfig cfg;
  cfg.seed = get_seed(tree, "seed");
  cfg.n = get_int(tree, "experiment.n");
  cfg.L = get_index_list(tree, "experiment.L");
  cfg.K = get_int(tree, "experiment.K");
  cfg.field = with_path("experiment.field", [&] { return field_from_string(get_string(tree, "experiment.field")); });
  cfg.mask = with_path("experiment.mask", [&] { return mask_kind_from_string(get_string(tree, "experiment.mask")); });
  cfg.snr_db = get_double_list(tree, "experiment.snr_db");
  cfg.trials = static_cast<int>(get_int(tree, "experiment.trials"));
  cfg.solver =
      with_path("experiment.solver", [&] { return solver_kind_from_string(get_string(tree, "experiment.solver")); });
  cfg.h_support = get_index_list(tree, "experiment.h_support");
  cfg.separated = get_bool(tree, "experiment.separated");
  if (!at_path(tree, "experiment.cls_radius").is_null()) cfg.cls_radius = get_double(tree, "experiment.cls_radius");

  cfg.cls.max_iters = static_cast<int>(get_int(tree, "cls.max_iters"));
  const json& step = at_path(tree, "cls.step");
  if (step.is_number()) {
    cfg.cls.step = step.get<double>();
  } else if (step.get<std::string>() != "auto") {
    throw ValidationError("cls.step: expected a number or \"auto\"");
  }
  cfg.cls.tol = get_double(tree, "cls.tol");
  cfg.cls.patience = static_cast<int>(get_int(tree, "cls.patience"));

  cfg.palm.lambda = get_double(tree, "palm.lambda");
  cfg.palm.max_iters = static_cast<int>(get_int(tree, "palm.max_iters"));
  cfg.palm.init_mode =
      with_path("palm.init_mode", [&] { return init_mode_from_string(get_string(tree, "palm.init_mode")); });
  cfg.palm.tol = get_double(tree, "palm.tol");
  cfg.palm.inner.lambda = cfg.palm.lambda;
  cfg.palm.inner.max_iters = static_cast<int>(get_int(tree, "palm.inner.max_iters"));
  cfg.palm.inner.tol = get_double(tree, "palm.inner.tol");
  cfg.palm.field = cfg.field;
  try {
    cfg.validate();
  } catch (const ArgumentError& e) {
    throw ValidationError(e.what());
  }
  return cfg;
}

LassoConfig lasso_config(const json& tree) {
  LassoConfig cfg{get_double(tree, "lasso.lambda"), static_cast<int>(get_int(tree, "lasso.max_iters")),
                  get_double(tree, "lasso.tol")};
  cfg.validate();
  return cfg;
}

LowerBoundConfig lower_bound_config(const json& tree) {
  LowerBoundConfig cfg{get_double(tree, "lower_bound.t"), get_bool(tree, "lower_bound.run_cls")};
  if (!(cfg.t > 0.0)) throw ValidationError("lower_bound.t: must be positive");
  return cfg;
}

Experiment2dConfig image2d_config(const json& tree) {
  Experiment2dConfig cfg;
  cfg.L = get_int(tree, "image2d.L");
  cfg.snr_db = at_path(tree, "image2d.snr_db").is_null() ? kNoNoise : get_double(tree, "image2d.snr_db");
  cfg.solver = with_path("image2d.solver", [&] { return solver_kind_from_string(get_string(tree, "image2d.solver")); });
  if (cfg.solver != SolverKind::palm && cfg.solver != SolverKind::ls) {
    throw ValidationError("image2d.solver: must be palm or ls");
  }
  cfg.mask = with_path("image2d.mask", [&] { return mask_kind_from_string(get_string(tree, "image2d.mask")); });
  if (cfg.mask == MaskKind::custom) throw ValidationError("image2d.mask: must be rademacher or quaternary_phase");
  cfg.seed = get_seed(tree, "seed");
  cfg.palm = experiment_config(tree).palm;
  if (cfg.L < 1) throw ValidationError("image2d.L: must be >= 1");
  const Index size = get_int(tree, "image2d.filter_size");
  if (size < 1) throw ValidationError("image2d.filter_size: must be >= 1");
  if (!(get_double(tree, "image2d.filter_sigma") > 0.0)) throw ValidationError("image2d.filter_sigma: must be positive");
  return cfg;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Blind deconvolution from randomly masked observations"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string axis = "L";
  int jobs = 1;
  app.add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", overrides, "override a config key: dotted.path=value (repeatable)");
  app.add_option("-o,--out", out_dir, "output directory (default: $MASKBD_OUT or .)");
  app.add_option("--axis", axis, "sweep axis: L or snr_db");
  app.add_option("-j,--jobs", jobs, "parallel trials for sweep")->check(CLI::PositiveNumber);

  const std::map<std::string, std::string> help{
      {"gen-masks", "sample a mask set"},
      {"simulate", "draw a ground truth, masks and measurements"},
      {"solve-cls", "nuclear-ball constrained least squares"},
      {"solve-sparse", "spectral kernel estimate plus LASSO"},
      {"palm", "alternating refinement (PALM)"},
      {"sweep", "Monte-Carlo sweep over L or snr_db"},
      {"verify-lower-bound", "adversarial-noise construction study"},
      {"image2d", "two-dimensional deblurring experiment"},
      {"selftest", "bundled invariant checks"}};
  for (const auto& [name, text] : help) app.add_subcommand(name, text);

  std::vector<const char*> argv{"maskbd"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << "usage error: " << e.what() << "\n";
    return kBadConfig;
  }

  Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.jobs = jobs;
  if (out_dir.empty()) {
    const char* env = std::getenv("MASKBD_OUT");
    out_dir = env != nullptr && *env != '\0' ? env : ".";
  }
  ctx.out = out_dir;

  try {
    ctx.config = default_config();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      json user = json::parse(in, nullptr, false);
      if (user.is_discarded()) throw ValidationError(config_path + ": not valid JSON");
      merge_config(ctx.config, user);
    }
    for (const auto& o : overrides) apply_override(ctx.config, o);
    ctx.axis = sweep_axis_from_string(axis);
    validate_all(ctx.config);
  } catch (const Error& e) {
    std::cout << "config error: " << e.what() << "\n";
    return kBadConfig;
  }

  try {
    fs::create_directories(ctx.out);
  } catch (const fs::filesystem_error& e) {
    std::cout << "cannot create output directory: " << e.what() << "\n";
    return kBadConfig;
  }

  try {
    return commands().at(ctx.command)(ctx);
  } catch (const ValidationError& e) {
    std::cout << "config error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    const fs::path report = ctx.out / "failure.json";
    try {
      write_json(report, {{"command", ctx.command}, {"error", e.what()}, {"config", ctx.config}});
    } catch (const std::exception&) {
      // Keep the original failure as the message.
    }
    std::cout << ctx.command << " failed: " << e.what() << " (report: " << report.string() << ")\n";
    return kSolverFailed;
  }
}

}  // namespace maskbd::cli
