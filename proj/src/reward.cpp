#include "pzero/reward.hpp"

#include <algorithm>
#include <cmath>

#include "pzero/error.hpp"

namespace pzero::reward {

FastDdg::FastDdg(const policy::PolicyParams& params, const lattice::BackboneTarget& target)
    : params_(&params), condition_(policy::Condition::of(target)), length_(target.length())
{
    require(!target.wild_type.tokens.empty(), ErrorKind::config,
            "target " + target.id + " has no wild-type sequence");
    require(target.wild_type.size() == target.length(), ErrorKind::config,
            "wild type of target " + target.id + " has the wrong length");
    wild_type_excess_ = policy::log_prob(params, condition_, target.wild_type).total -
                        policy::log_prob(params, policy::Condition::masked_condition(), target.wild_type).total;
}

double FastDdg::operator()(const Sequence& y) const
{
    require(y.size() == length_, ErrorKind::input, "sequence length does not match target");
    const double excess = policy::log_prob(*params_, condition_, y).total -
                          policy::log_prob(*params_, policy::Condition::masked_condition(), y).total;
    return -thermal_energy * (excess - wild_type_excess_);
}

double fast_ddg(const policy::PolicyParams& params, const lattice::BackboneTarget& target, const Sequence& y)
{
    require(y.size() == target.length(), ErrorKind::input, "sequence length does not match target");
    return FastDdg(params, target)(y);
}

void Weights::validate() const
{
    require(structure >= 0.0 && ddg >= 0.0 && bonus >= 0.0, ErrorKind::config, "reward weights must be nonnegative");
    require(std::abs(structure + ddg - 1.0) < 1e-12, ErrorKind::config,
            "structure and ddG weights must sum to one");
}

std::vector<double> min_max_normalize(std::span<const double> raw)
{
    require(!raw.empty(), ErrorKind::usage, "nothing to normalize");
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double range = *hi - *lo;
    std::vector<double> out(raw.size(), 0.5);
    if (range > 0.0) {
        for (std::size_t i = 0; i < raw.size(); ++i) {
            out[i] = (raw[i] - *lo) / range;
        }
        // exact endpoints regardless of rounding
        out[static_cast<std::size_t>(lo - raw.begin())] = 0.0;
        out[static_cast<std::size_t>(hi - raw.begin())] = 1.0;
    }
    return out;
}

std::vector<RewardBundle> compose(std::span<const double> structure_raw, std::span<const double> ddg_raw,
                                  std::span<const double> bonus_raw, const Weights& weights)
{
    weights.validate();
    const auto n = structure_raw.size();
    require(n >= 2, ErrorKind::usage, "reward normalization needs a group of at least two");
    require(ddg_raw.size() == n && (bonus_raw.empty() || bonus_raw.size() == n), ErrorKind::usage,
            "reward components have different group sizes");
    const auto s = min_max_normalize(structure_raw);
    const auto d = min_max_normalize(ddg_raw);
    std::vector<double> b(n, 0.0);
    if (!bonus_raw.empty()) {
        b = min_max_normalize(bonus_raw);
    }
    const double wb = bonus_raw.empty() ? 0.0 : weights.bonus;
    std::vector<RewardBundle> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = out[i];
        r.structure_raw = structure_raw[i];
        r.ddg_raw = ddg_raw[i];
        r.fast_ddg = -ddg_raw[i];
        r.bonus_raw = bonus_raw.empty() ? 0.0 : bonus_raw[i];
        r.structure_norm = s[i];
        r.ddg_norm = d[i];
        r.bonus_norm = b[i];
        r.composite = (weights.structure * s[i] + weights.ddg * d[i] + wb * b[i]) / (1.0 + wb);
    }
    return out;
}

std::vector<RewardBundle> evaluate_group(const policy::PolicyParams& snapshot, const lattice::BackboneTarget& target,
                                         std::span<const Sequence> candidates, const Weights& weights,
                                         std::span<const double> bonus_raw)
{
    require(candidates.size() >= 2, ErrorKind::usage, "reward normalization needs a group of at least two");
    const FastDdg surrogate(snapshot, target);
    std::vector<double> structure(candidates.size());
    std::vector<double> ddg(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        structure[i] = lattice::structure_match(target, candidates[i]);
        ddg[i] = -surrogate(candidates[i]);
    }
    return compose(structure, ddg, bonus_raw, weights);
}

}  // namespace pzero::reward
