#include "maskbd/masks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "binary_io.hpp"

namespace maskbd {

namespace {

constexpr std::string_view kMaskMagic = "MBDMASK1";
constexpr double kMomentTol = 1e-12;

}  // namespace

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::rademacher:
      return "rademacher";
    case MaskKind::quaternary_phase:
      return "quaternary_phase";
    case MaskKind::custom:
      return "custom";
  }
  return "unknown";
}

MaskKind mask_kind_from_string(const std::string& name) {
  if (name == "rademacher") return MaskKind::rademacher;
  if (name == "quaternary_phase") return MaskKind::quaternary_phase;
  if (name == "custom") return MaskKind::custom;
  throw ValidationError("unknown mask kind '" + name + "'");
}

MaskDistribution::MaskDistribution(MaskKind kind, std::vector<cplx> support, std::vector<double> probabilities,
                                   double nu)
    : kind_(kind), support_(std::move(support)), probabilities_(std::move(probabilities)), nu_(nu) {
  validate();
}

MaskDistribution MaskDistribution::rademacher() {
  return MaskDistribution(MaskKind::rademacher, {1.0, -1.0}, {0.5, 0.5}, 1.0);
}

MaskDistribution MaskDistribution::quaternary_phase() {
  return MaskDistribution(MaskKind::quaternary_phase, {cplx(1, 0), cplx(-1, 0), cplx(0, 1), cplx(0, -1)},
                          {0.25, 0.25, 0.25, 0.25}, 1.0);
}

MaskDistribution MaskDistribution::custom(std::vector<cplx> support, std::vector<double> probabilities, double nu) {
  return MaskDistribution(MaskKind::custom, std::move(support), std::move(probabilities), nu);
}

void MaskDistribution::validate() const {
  if (support_.empty() || support_.size() != probabilities_.size()) {
    throw ValidationError("mask distribution: support and probabilities must be non-empty and of equal length");
  }
  if (!(nu_ >= 1.0) || !std::isfinite(nu_)) throw ValidationError("mask distribution: nu must be finite and >= 1");
  double total = 0.0;
  cplx mean = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < support_.size(); ++i) {
    const double p = probabilities_[i];
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("mask distribution: negative probability");
    if (std::abs(support_[i]) > nu_ * (1.0 + kMomentTol)) {
      throw ValidationError("mask distribution: support point exceeds nu");
    }
    total += p;
    mean += p * support_[i];
    second += p * std::norm(support_[i]);
  }
  if (std::abs(total - 1.0) > kMomentTol) throw ValidationError("mask distribution: probabilities do not sum to 1");
  if (std::abs(mean) > kMomentTol) throw ValidationError("mask distribution: mean is not zero");
  if (std::abs(second - 1.0) > kMomentTol) throw ValidationError("mask distribution: E|g|^2 is not 1");
}

MaskSet::MaskSet(CMatrix stacked, MaskDistribution distribution, std::uint64_t seed, Grid grid)
    : stacked_(std::move(stacked)), distribution_(std::move(distribution)), seed_(seed), grid_(grid) {
  if (grid_.size() != stacked_.rows()) throw DimensionError("MaskSet: grid does not match mask length");
  if (stacked_.cols() < 1) throw ArgumentError("MaskSet: at least one mask is required");
  const double bound = distribution_.nu() * (1.0 + kMomentTol);
  if ((stacked_.array().abs() > bound).any()) throw ValidationError("MaskSet: entry exceeds nu");
}

MaskSet MaskSet::subset(Index first, Index count) const {
  if (first < 0 || count < 1 || first + count > stacked_.cols()) throw ArgumentError("MaskSet::subset out of range");
  return MaskSet(stacked_.middleCols(first, count), distribution_, seed_, grid_);
}

std::uint64_t MaskSet::fingerprint() const {
  return detail::fnv1a(stacked_.data(), static_cast<std::size_t>(stacked_.size()) * sizeof(cplx));
}

MaskSet sample_mask_set(const MaskDistribution& dist, Index n, Index L, std::uint64_t seed) {
  return sample_mask_set(dist, Grid::line(n), L, seed);
}

MaskSet sample_mask_set(const MaskDistribution& dist, Grid grid, Index L, std::uint64_t seed) {
  dist.validate();
  const Index n = grid.size();
  if (n < 1 || L < 1) throw ArgumentError("sample_mask_set: n and L must be positive");
  std::mt19937_64 engine(seed);
  CMatrix D(n, L);
  const auto& support = dist.support();
  switch (dist.kind()) {
    case MaskKind::rademacher: {
      std::bernoulli_distribution coin(0.5);
      for (Index l = 0; l < L; ++l)
        for (Index j = 0; j < n; ++j) D(j, l) = coin(engine) ? 1.0 : -1.0;
      break;
    }
    case MaskKind::quaternary_phase:
    case MaskKind::custom: {
      std::discrete_distribution<std::size_t> pick(dist.probabilities().begin(), dist.probabilities().end());
      for (Index l = 0; l < L; ++l)
        for (Index j = 0; j < n; ++j) D(j, l) = support[pick(engine)];
      break;
    }
  }
  return MaskSet(std::move(D), dist, seed, grid);
}

SingularBounds singular_bounds(const MaskSet& ms) {
  if (ms.n() < ms.count()) throw DimensionError("singular_bounds: requires n >= L");
  // D_g is tall and thin; the Gram route is exact up to squaring, and for the
  // n <= 4096 regime the SVD itself is affordable.
  const Eigen::BDCSVD<CMatrix> svd(ms.stacked());
  const auto& s = svd.singularValues();
  return {s.minCoeff(), s.maxCoeff()};
}

void save_mask_set(const MaskSet& ms, const std::filesystem::path& path) {
  const auto& dist = ms.distribution();
  {
    detail::BinaryWriter w(path);
    w.magic(kMaskMagic);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(ms.grid().rows));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(ms.grid().cols));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(ms.count()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dist.kind()));
    w.put<double>(dist.nu());
    w.put<std::uint64_t>(ms.seed());
    w.put<std::uint64_t>(dist.support().size());
    for (std::size_t i = 0; i < dist.support().size(); ++i) {
      w.put<double>(dist.support()[i].real());
      w.put<double>(dist.support()[i].imag());
      w.put<double>(dist.probabilities()[i]);
    }
    w.matrix(ms.stacked());
    w.finish();
  }
  nlohmann::json meta;
  meta["format"] = "maskbd.maskset";
  meta["version"] = 1;
  meta["n"] = ms.n();
  meta["rows"] = ms.grid().rows;
  meta["cols"] = ms.grid().cols;
  meta["L"] = ms.count();
  meta["kind"] = to_string(dist.kind());
  meta["nu"] = dist.nu();
  meta["seed"] = ms.seed();
  meta["fingerprint"] = ms.fingerprint();
  auto support = nlohmann::json::array();
  for (std::size_t i = 0; i < dist.support().size(); ++i) {
    support.push_back({{"re", dist.support()[i].real()},
                       {"im", dist.support()[i].imag()},
                       {"p", dist.probabilities()[i]}});
  }
  meta["support"] = support;
  std::ofstream(path.string() + ".json") << meta.dump(2) << '\n';
}

MaskSet load_mask_set(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic(kMaskMagic);
  const auto rows = static_cast<Index>(r.get<std::uint64_t>());
  const auto cols = static_cast<Index>(r.get<std::uint64_t>());
  const auto L = static_cast<Index>(r.get<std::uint64_t>());
  const auto kind_raw = r.get<std::uint32_t>();
  const double nu = r.get<double>();
  const auto seed = r.get<std::uint64_t>();
  const auto support_count = r.get<std::uint64_t>();
  if (kind_raw > 2 || support_count > 4096) throw FormatError(path.string() + ": corrupt mask header");
  std::vector<cplx> support;
  std::vector<double> probs;
  for (std::uint64_t i = 0; i < support_count; ++i) {
    const double re = r.get<double>();
    const double im = r.get<double>();
    support.emplace_back(re, im);
    probs.push_back(r.get<double>());
  }
  const auto kind = static_cast<MaskKind>(kind_raw);
  MaskDistribution dist = kind == MaskKind::rademacher         ? MaskDistribution::rademacher()
                          : kind == MaskKind::quaternary_phase ? MaskDistribution::quaternary_phase()
                                                               : MaskDistribution::custom(support, probs, nu);
  CMatrix D = r.matrix(rows * cols, L);
  r.expect_end();
  return MaskSet(std::move(D), std::move(dist), seed, Grid{rows, cols});
}

}  // namespace maskbd
