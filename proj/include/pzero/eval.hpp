#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pzero/dataset.hpp"
#include "pzero/lattice.hpp"
#include "pzero/policy.hpp"
#include "pzero/rl.hpp"

namespace pzero::eval {

struct EvalConfig {
    policy::Sampler sampler{0.8, 0.9};
    std::size_t samples_per_target = 8;
    double success_threshold = 0.9;
    double oracle_temperature = lattice::default_temperature;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetricSet {
    double recovery = 0.0;
    double hamming = 0.0;
    double mean_structure = 0.0;
    double frac_structure_one = 0.0;
    double mean_fast_ddg = 0.0;
    double mean_oracle_ddg = 0.0;
    double success_rate = 0.0;
    double frac_structure_pass = 0.0;  // structure_match >= threshold
    double frac_oracle_negative = 0.0;
    double distinct = 0.0;

    nlohmann::json to_json() const;
};

struct TargetReport {
    std::string id;
    MetricSet metrics;
};

struct EvalReport {
    std::string checkpoint_id;
    std::uint64_t seed = 0;
    std::size_t samples_per_target = 0;
    double success_threshold = 0.0;
    std::vector<TargetReport> targets;
    MetricSet aggregate;  // mean over targets
    std::optional<double> kl_to_reference;

    nlohmann::json to_json() const;
};

/// Mean fraction of positions matching the wild type. Input error on a length
/// mismatch.
double recovery_rate(std::span<const Sequence> designs, const Sequence& wild_type);

/// Metrics for one target's designs; `params` scores fast_ddg.
MetricSet design_metrics(const policy::PolicyParams& params, const lattice::BackboneTarget& target,
                         std::span<const Sequence> designs, const EvalConfig& cfg);

/// Samples designs for the given test targets and scores them. Leakage error
/// if any target is not in the test split.
EvalReport evaluate_checkpoint(const policy::PolicyParams& params, const Dataset& dataset,
                               std::span<const std::string> target_ids, const EvalConfig& cfg,
                               const std::string& checkpoint_id, const policy::PolicyParams* reference = nullptr,
                               rl::Execution exec = rl::Execution::parallel);

/// All test-split targets.
EvalReport evaluate_checkpoint(const policy::PolicyParams& params, const Dataset& dataset, const EvalConfig& cfg,
                               const std::string& checkpoint_id, const policy::PolicyParams* reference = nullptr,
                               rl::Execution exec = rl::Execution::parallel);

struct CurveRow {
    int iteration = 0;
    double reward = 0.0;
    double d_cos = 0.0;
    double hamming = 0.0;
    double kl = 0.0;
    double entropy_lb = 0.0;

    nlohmann::json to_json() const;
};

/// Training-dynamics curve from per-iteration metrics records, ordered by
/// iteration.
std::vector<CurveRow> training_curve(std::span<const nlohmann::json> metrics);

/// Spearman rank correlation with average ranks for ties; 0 when either side
/// is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace pzero::eval
