#pragma once

// Fine-tuning algorithms built from the same three pieces: a reward term, an
// exact KL anchor to a frozen reference, and an embedding-diversity bonus.
//   loss = reward_term + kl_coef * KL(p_theta || p_ref) - div_coef * D_cos

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pzero/lattice.hpp"
#include "pzero/policy.hpp"
#include "pzero/reward.hpp"
#include "pzero/rng.hpp"

namespace pzero::rl {

enum class Algorithm { raft, grpo, dpo, multi_dpo };

const char* to_string(Algorithm a) noexcept;
Algorithm parse_algorithm(const std::string& s);

struct Ablation {
    bool no_div = false;
    bool no_kl = false;
    bool diversity_as_reward = false;
    bool hamming_as_reward = false;
    bool tm_only = false;
    bool ddg_only = false;

    /// Config error for mutually exclusive switches.
    void validate() const;
    bool operator==(const Ablation&) const = default;
};

/// Named arms: full, no_div, no_kl, tm_only, ddg_only, diversity_reward,
/// hamming_reward.
const std::vector<std::string>& arm_names();
Ablation arm(const std::string& name);

struct TrainConfig {
    Algorithm algorithm = Algorithm::grpo;
    double alpha_kl = 0.1;
    std::optional<double> beta_kl;  // GRPO KL weight; unset binds to alpha_kl
    double alpha_div = 0.05;
    reward::Weights weights{0.5, 0.5, 0.5};
    std::size_t group_size = 8;
    int iterations = 20;
    policy::Sampler sampler{0.8, 0.9};
    double clip_eps = 0.1;
    double learning_rate = 1e-2;
    int updates_per_iteration = 1;
    std::uint64_t seed = 0;
    double gate_threshold = 0.5;
    double gate_fraction = 0.5;
    double dpo_beta = 0.1;
    policy::Sampler dpo_sampler{0.1, 1.0};
    bool dpo_diversity = false;
    Ablation ablation;

    void validate() const;
};

/// Coefficients after applying the ablation switches.
struct Coefficients {
    double kl = 0.0;
    double div = 0.0;
    double clip_eps = 0.1;
    double dpo_beta = 0.1;
};

Coefficients effective_coefficients(const TrainConfig& cfg);
reward::Weights effective_weights(const TrainConfig& cfg);

struct CandidateGroup {
    std::size_t target_index = 0;
    const lattice::BackboneTarget* target = nullptr;
    policy::Sampler sampler;
    std::vector<policy::RolloutRecord> rollouts;
    std::vector<reward::RewardBundle> rewards;
    std::vector<double> advantages;
    double gate_pass_fraction = 0.0;
    bool gated = false;

    std::vector<double> composites() const;
    std::vector<Sequence> sequences() const;
};

inline constexpr double advantage_eps = 1e-8;

/// Group z-scores (population std).
std::vector<double> group_advantages(std::span<const double> rewards, double eps = advantage_eps);

/// Fraction of candidates with structure_match >= threshold.
double gate_pass_fraction(std::span<const reward::RewardBundle> rewards, double threshold);

/// Samples, scores and gates one group. `snapshot` is the rollout policy.
CandidateGroup make_group(const policy::PolicyParams& snapshot, const lattice::BackboneTarget& target,
                          std::size_t target_index, const TrainConfig& cfg, Rng& rng);

/// Rewards, advantages and gate for already-sampled rollouts.
void score_group(const policy::PolicyParams& snapshot, CandidateGroup& group, const TrainConfig& cfg);

/// Lowest index of the maximal composite; `tie` reports a shared maximum.
std::size_t best_index(const CandidateGroup& group, bool* tie = nullptr);

struct LossTerms {
    double reward = 0.0;  // -surrogate, CE or preference loss
    double kl = 0.0;      // unweighted KL term
    double d_cos = 0.0;   // unweighted diversity term
    double kl_coef = 0.0;
    double div_coef = 0.0;
    double total = 0.0;   // summed from per-group contributions
    std::size_t sequences = 0;  // sequences that carry gradient
    std::size_t groups = 0;     // groups (or pairs) that carry gradient

    double recomposed() const { return reward + kl_coef * kl - div_coef * d_cos; }
};

struct LossAndGrad {
    LossTerms terms;
    policy::PolicyParams grad;
};

enum class Execution { serial, parallel };

/// Mean over positions of the exact KL(p_theta || p_ref) of the untempered
/// next-token distributions along the given sequences, with its gradient.
LossAndGrad kl_to_ref(const policy::PolicyParams& params, const policy::PolicyParams& ref,
                      const policy::Condition& cond, std::span<const Sequence> sequences);

/// min(rho A, clip(rho, 1 - eps, 1 + eps) A)
double clipped_surrogate(double rho, double advantage, double eps);

LossAndGrad grpo_loss(const policy::PolicyParams& params, const policy::PolicyParams& ref,
                      std::span<const CandidateGroup> groups, const Coefficients& k,
                      Execution exec = Execution::serial);

LossAndGrad raft_loss(const policy::PolicyParams& params, const policy::PolicyParams& ref,
                      std::span<const CandidateGroup> groups, const Coefficients& k,
                      Execution exec = Execution::serial);

/// Mean per-position cross-entropy of (target, sequence) pairs; a null target
/// means the masked condition.
LossAndGrad likelihood_loss(const policy::PolicyParams& params,
                            std::span<const lattice::BackboneTarget* const> targets,
                            std::span<const Sequence> sequences, Execution exec = Execution::serial);

enum class Corpus {
    wild_type,  // one sequence per target
    designing,  // every sequence that folds uniquely into the target
};

const char* to_string(Corpus c) noexcept;
Corpus parse_corpus(const std::string& s);

struct PretrainConfig {
    int steps = 0;
    double learning_rate = 0.5;
    bool masked_prior = false;  // also fit the corpus under the masked condition
    Corpus corpus = Corpus::designing;

    void validate() const;
};

/// Supervised warm start on sequences that design the targets, standing in
/// for a pretrained base model. Returns the final cross-entropy.
double pretrain(policy::PolicyParams& params, std::span<const lattice::BackboneTarget* const> targets,
                const PretrainConfig& cfg, Execution exec = Execution::parallel);

struct PreferencePair {
    const lattice::BackboneTarget* target = nullptr;
    Sequence chosen;
    Sequence rejected;
};

/// (best, worst) by composite within each gated group; identical pairs dropped.
std::vector<PreferencePair> preference_pairs(std::span<const CandidateGroup> groups);

LossAndGrad dpo_loss(const policy::PolicyParams& params, const policy::PolicyParams& ref,
                     std::span<const PreferencePair> pairs, const Coefficients& k, bool with_diversity,
                     Execution exec = Execution::serial);

/// Per-token importance ratios of the current policy against the stored
/// sampling distributions of a rollout.
std::vector<double> importance_ratios(const policy::PolicyParams& params, const lattice::BackboneTarget& target,
                                      const policy::RolloutRecord& rollout, const policy::Sampler& sampler);

struct StepResult {
    LossTerms first;  // terms at the pre-step parameters
    int updates = 0;
    bool skipped = false;
};

/// params -= lr * grad, repeated updates_per_iteration times.
StepResult grpo_step(policy::PolicyParams& params, const policy::PolicyParams& ref,
                     std::span<const CandidateGroup> groups, const TrainConfig& cfg,
                     Execution exec = Execution::serial);
StepResult raft_step(policy::PolicyParams& params, const policy::PolicyParams& ref,
                     std::span<const CandidateGroup> groups, const TrainConfig& cfg,
                     Execution exec = Execution::serial);
StepResult dpo_step(policy::PolicyParams& params, const policy::PolicyParams& ref,
                    std::span<const PreferencePair> pairs, const TrainConfig& cfg,
                    Execution exec = Execution::serial);

struct TrainerState {
    policy::PolicyParams policy;
    policy::PolicyParams reference;
    int iteration = 0;  // completed iterations
};

/// One iteration's record for the metrics log.
struct IterationMetrics {
    int iteration = 0;
    std::string algorithm;
    double mean_reward = 0.0;
    double mean_structure = 0.0;
    double mean_fast_ddg = 0.0;
    double kl = 0.0;
    double d_cos = 0.0;
    double hamming = 0.0;
    double entropy_lb = 0.0;
    double gated_fraction = 0.0;
    double distinct_per_group = 0.0;
    std::size_t argmax_ties = 0;
    std::size_t pairs = 0;
    bool skipped = false;
    LossTerms loss;
    /// Present for L <= 4: exact entropy of the sampling distribution and the
    /// bound from its exact population diversity, worst margin over targets.
    std::optional<double> exact_entropy_margin;

    nlohmann::json to_json() const;
};

/// Builds the groups for every target from the current policy. Deterministic
/// per (seed, iteration, target index) whatever the execution mode.
std::vector<CandidateGroup> collect_groups(const policy::PolicyParams& snapshot,
                                           std::span<const lattice::BackboneTarget* const> targets,
                                           const TrainConfig& cfg, int iteration, Execution exec,
                                           const policy::Sampler& sampler);

/// Runs iteration state.iteration + 1 over the training targets.
IterationMetrics run_iteration(TrainerState& state, std::span<const lattice::BackboneTarget* const> targets,
                               const TrainConfig& cfg, Execution exec = Execution::parallel);

}  // namespace pzero::rl
