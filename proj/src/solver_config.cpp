#include <cmath>

#include "maskbd/solvers.hpp"

namespace maskbd {

void ClsConfig::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("cls.radius must be positive");
  if (max_iters < 1) throw ValidationError("cls.max_iters must be >= 1");
  if (step && !(*step > 0.0 && std::isfinite(*step))) throw ValidationError("cls.step must be positive");
  if (!(tol > 0.0)) throw ValidationError("cls.tol must be positive");
  if (patience < 1) throw ValidationError("cls.patience must be >= 1");
}

void LassoConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("lasso.lambda must be positive");
  if (max_iters < 1) throw ValidationError("lasso.max_iters must be >= 1");
  if (!(tol > 0.0)) throw ValidationError("lasso.tol must be positive");
}

void PalmConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("palm.lambda must be >= 0");
  if (max_iters < 1) throw ValidationError("palm.max_iters must be >= 1");
  if (!(tol > 0.0)) throw ValidationError("palm.tol must be positive");
  if (inner.max_iters < 1) throw ValidationError("palm.inner.max_iters must be >= 1");
  if (!(inner.tol > 0.0)) throw ValidationError("palm.inner.tol must be positive");
}

std::string to_string(InitMode mode) {
  switch (mode) {
    case InitMode::constructed:
      return "constructed";
    case InitMode::randomized:
      return "randomized";
    case InitMode::deterministic:
      return "deterministic";
  }
  return "unknown";
}

InitMode init_mode_from_string(const std::string& name) {
  if (name == "constructed") return InitMode::constructed;
  if (name == "randomized") return InitMode::randomized;
  if (name == "deterministic") return InitMode::deterministic;
  throw ValidationError("unknown init mode '" + name + "'");
}

std::string to_string(Field field) { return field == Field::real ? "real" : "complex"; }

Field field_from_string(const std::string& name) {
  if (name == "real") return Field::real;
  if (name == "complex") return Field::complex;
  throw ValidationError("unknown field '" + name + "'");
}

nlohmann::json to_json(const ClsConfig& cfg) {
  nlohmann::json j{{"radius", cfg.radius}, {"max_iters", cfg.max_iters}, {"tol", cfg.tol}, {"patience", cfg.patience}};
  j["step"] = cfg.step ? nlohmann::json(*cfg.step) : nlohmann::json("auto");
  return j;
}

nlohmann::json to_json(const LassoConfig& cfg) {
  return {{"lambda", cfg.lambda}, {"max_iters", cfg.max_iters}, {"tol", cfg.tol}};
}

nlohmann::json to_json(const PalmConfig& cfg) {
  return {{"lambda", cfg.lambda},
          {"max_iters", cfg.max_iters},
          {"init_mode", to_string(cfg.init_mode)},
          {"inner", {{"max_iters", cfg.inner.max_iters}, {"tol", cfg.inner.tol}}},
          {"tol", cfg.tol},
          {"field", to_string(cfg.field)},
          {"seed", cfg.seed}};
}

nlohmann::json to_json(const SolverReport& report, std::size_t max_history) {
  nlohmann::json j;
  j["solver"] = report.solver;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["monotone"] = report.monotone;
  j["wall_time_s"] = report.wall_time_s;
  j["warnings"] = report.warnings;
  const auto& hist = report.objective_history;
  nlohmann::json history = nlohmann::json::array();
  if (hist.size() <= max_history || max_history < 2) {
    for (std::size_t i = 0; i < hist.size(); ++i) history.push_back({i, hist[i]});
  } else {
    // Evenly spaced indices, endpoints included.
    const double stride = static_cast<double>(hist.size() - 1) / static_cast<double>(max_history - 1);
    for (std::size_t k = 0; k < max_history; ++k) {
      const auto i = static_cast<std::size_t>(std::llround(static_cast<double>(k) * stride));
      history.push_back({i, hist[i]});
    }
  }
  j["objective_history"] = history;
  if (!hist.empty()) j["final_objective"] = hist.back();
  return j;
}

}  // namespace maskbd
