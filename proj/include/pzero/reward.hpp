#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pzero/lattice.hpp"
#include "pzero/policy.hpp"

namespace pzero::reward {

/// k_B T at 298 K in kcal/mol.
inline constexpr double thermal_energy = 0.593;

/// Likelihood-ratio stability surrogate relative to the wild type:
///   -kT [ (log p(y|x) - log p0(y)) - (log p(wt|x) - log p0(wt)) ]
/// with p0 the same network under the masked condition. Negative means
/// predicted more stable than the wild type.
double fast_ddg(const policy::PolicyParams& params, const lattice::BackboneTarget& target,
                const Sequence& y);

/// Caches the wild-type term for repeated scoring against one target.
class FastDdg {
public:
    FastDdg(const policy::PolicyParams& params, const lattice::BackboneTarget& target);
    double operator()(const Sequence& y) const;

private:
    const policy::PolicyParams* params_;
    policy::Condition condition_;
    std::size_t length_ = 0;
    double wild_type_excess_ = 0.0;
};

struct Weights {
    double structure = 0.5;
    double ddg = 0.5;
    /// Weight of an optional per-candidate diversity bonus (ablation arms).
    double bonus = 0.0;

    void validate() const;
};

struct RewardBundle {
    double structure_raw = 0.0;
    double ddg_raw = 0.0;  // -fast_ddg, larger is more stable
    double bonus_raw = 0.0;
    double structure_norm = 0.0;
    double ddg_norm = 0.0;
    double bonus_norm = 0.0;
    double composite = 0.0;
    double fast_ddg = 0.0;
};

/// Per-group min-max scaling to [0, 1]; a group with zero range maps to 0.5.
std::vector<double> min_max_normalize(std::span<const double> raw);

/// Normalizes raw scores within one group and assembles composites:
///   (ws * s~ + wd * d~ + wb * b~) / (1 + wb)
/// Usage error for groups smaller than two.
std::vector<RewardBundle> compose(std::span<const double> structure_raw, std::span<const double> ddg_raw,
                                  std::span<const double> bonus_raw, const Weights& weights);

/// Scores one candidate group against its target using `snapshot` for the
/// surrogate. Never touches policy state.
std::vector<RewardBundle> evaluate_group(const policy::PolicyParams& snapshot,
                                         const lattice::BackboneTarget& target,
                                         std::span<const Sequence> candidates, const Weights& weights,
                                         std::span<const double> bonus_raw = {});

}  // namespace pzero::reward
