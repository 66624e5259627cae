#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "maskbd/experiments.hpp"

namespace maskbd::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kBadConfig = 2, kSolverFailed = 3 };

/// Every recognised key with its default value. User configs may only
/// override keys present here.
nlohmann::json default_config();

/// Recursively overlays `patch` onto `tree`. Unknown keys and type mismatches
/// throw ValidationError naming the dotted path.
void merge_config(nlohmann::json& tree, const nlohmann::json& patch);

/// Applies "dotted.path=value". The value is read as JSON when it parses,
/// otherwise as a bare string.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// Typed views of a resolved tree; these also validate.
ExperimentConfig experiment_config(const nlohmann::json& tree);
LassoConfig lasso_config(const nlohmann::json& tree);
LowerBoundConfig lower_bound_config(const nlohmann::json& tree);
Experiment2dConfig image2d_config(const nlohmann::json& tree);

/// Lifted estimate as a flat binary file (magic, rows, cols, column-major
/// complex payload).
void save_lifted(const CMatrix& X, const std::filesystem::path& path);
CMatrix load_lifted(const std::filesystem::path& path);

/// Entry point shared by the executable and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace maskbd::cli
