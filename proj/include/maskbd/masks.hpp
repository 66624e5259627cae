#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "maskbd/signal.hpp"

namespace maskbd {

enum class MaskKind { rademacher, quaternary_phase, custom };

std::string to_string(MaskKind kind);
MaskKind mask_kind_from_string(const std::string& name);

/// Admissible mask law: |g| <= nu, E g = 0, E|g|^2 = 1.
///
/// Built-in kinds have nu = 1. Custom laws have finite support so the moment
/// conditions can be checked exactly at construction.
class MaskDistribution {
 public:
  static MaskDistribution rademacher();
  static MaskDistribution quaternary_phase();
  /// Throws ValidationError unless the support satisfies the moment conditions.
  static MaskDistribution custom(std::vector<cplx> support, std::vector<double> probabilities, double nu);

  MaskKind kind() const { return kind_; }
  double nu() const { return nu_; }
  const std::vector<cplx>& support() const { return support_; }
  const std::vector<double>& probabilities() const { return probabilities_; }

  /// Re-checks the moment conditions (tolerance 1e-12).
  void validate() const;

 private:
  MaskDistribution(MaskKind kind, std::vector<cplx> support, std::vector<double> probabilities, double nu);

  MaskKind kind_;
  std::vector<cplx> support_;
  std::vector<double> probabilities_;
  double nu_;
};

/// L coded masks of length n, stored as the columns of D_g = [d_1, ..., d_L].
class MaskSet {
 public:
  MaskSet(CMatrix stacked, MaskDistribution distribution, std::uint64_t seed, Grid grid);

  Index n() const { return stacked_.rows(); }
  Index count() const { return stacked_.cols(); }
  Grid grid() const { return grid_; }
  const CMatrix& stacked() const { return stacked_; }
  auto column(Index l) const { return stacked_.col(l); }
  Signal mask(Index l) const { return Signal(stacked_.col(l), grid_); }
  const MaskDistribution& distribution() const { return distribution_; }
  std::uint64_t seed() const { return seed_; }

  /// Masks l in [first, first + count) as their own set.
  MaskSet subset(Index first, Index count) const;

  /// FNV-1a over the payload bytes; identifies the set in measurement files.
  std::uint64_t fingerprint() const;

 private:
  CMatrix stacked_;
  MaskDistribution distribution_;
  std::uint64_t seed_;
  Grid grid_;
};

/// n * L i.i.d. draws, column by column, so a set with L masks is a prefix of
/// the set with L' > L masks under the same seed.
MaskSet sample_mask_set(const MaskDistribution& dist, Index n, Index L, std::uint64_t seed);
MaskSet sample_mask_set(const MaskDistribution& dist, Grid grid, Index L, std::uint64_t seed);

struct SingularBounds {
  double sigma_min;
  double sigma_max;
};

/// Extreme singular values of D_g. Requires n >= L.
SingularBounds singular_bounds(const MaskSet& ms);

/// Binary payload at `path` plus a JSON sidecar at `path` + ".json".
void save_mask_set(const MaskSet& ms, const std::filesystem::path& path);
MaskSet load_mask_set(const std::filesystem::path& path);

}  // namespace maskbd
