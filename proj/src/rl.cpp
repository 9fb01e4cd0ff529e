#include "pzero/rl.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "pzero/diversity.hpp"
#include "pzero/error.hpp"

namespace pzero::rl {

using policy::PolicyParams;

const char* to_string(Algorithm a) noexcept
{
    switch (a) {
    case Algorithm::raft: return "raft";
    case Algorithm::grpo: return "grpo";
    case Algorithm::dpo: return "dpo";
    case Algorithm::multi_dpo: return "multi_dpo";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& s)
{
    if (s == "raft") return Algorithm::raft;
    if (s == "grpo") return Algorithm::grpo;
    if (s == "dpo") return Algorithm::dpo;
    if (s == "multi_dpo") return Algorithm::multi_dpo;
    fail(ErrorKind::config, "unknown algorithm '" + s + "' (raft, grpo, dpo, multi_dpo)");
}

void Ablation::validate() const
{
    require(!(diversity_as_reward && hamming_as_reward), ErrorKind::config,
            "diversity_as_reward and hamming_as_reward are mutually exclusive");
    require(!(tm_only && ddg_only), ErrorKind::config, "tm_only and ddg_only are mutually exclusive");
}

const std::vector<std::string>& arm_names()
{
    static const std::vector<std::string> names{"full",    "no_div",           "no_kl",         "tm_only",
                                                "ddg_only", "diversity_reward", "hamming_reward"};
    return names;
}

Ablation arm(const std::string& name)
{
    Ablation a;
    if (name == "full") {
    } else if (name == "no_div") {
        a.no_div = true;
    } else if (name == "no_kl") {
        a.no_kl = true;
    } else if (name == "tm_only") {
        a.tm_only = true;
    } else if (name == "ddg_only") {
        a.ddg_only = true;
    } else if (name == "diversity_reward") {
        a.diversity_as_reward = true;
    } else if (name == "hamming_reward") {
        a.hamming_as_reward = true;
    } else {
        fail(ErrorKind::config, "unknown ablation arm '" + name + "'");
    }
    return a;
}

void TrainConfig::validate() const
{
    require(alpha_kl >= 0.0 && alpha_div >= 0.0, ErrorKind::config, "alpha_kl and alpha_div must be nonnegative");
    require(!beta_kl || *beta_kl >= 0.0, ErrorKind::config, "beta_kl must be nonnegative");
    require(clip_eps > 0.0 && clip_eps < 1.0, ErrorKind::config, "clip epsilon must lie in (0, 1)");
    require(group_size >= 2, ErrorKind::config, "group size must be at least 2");
    require(iterations >= 0, ErrorKind::config, "iterations must be nonnegative");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::config,
            "learning rate must be finite and nonnegative");
    require(updates_per_iteration >= 1, ErrorKind::config, "updates_per_iteration must be at least 1");
    require(gate_threshold >= 0.0 && gate_threshold <= 1.0 && gate_fraction >= 0.0 && gate_fraction <= 1.0,
            ErrorKind::config, "gate threshold and fraction must lie in [0, 1]");
    require(dpo_beta >= 0.0, ErrorKind::config, "dpo beta must be nonnegative");
    sampler.validate();
    dpo_sampler.validate();
    weights.validate();
    ablation.validate();
}

Coefficients effective_coefficients(const TrainConfig& cfg)
{
    Coefficients k;
    const auto& a = cfg.ablation;
    k.kl = a.no_kl ? 0.0 : (cfg.algorithm == Algorithm::grpo ? cfg.beta_kl.value_or(cfg.alpha_kl) : cfg.alpha_kl);
    k.div = (a.no_div || a.diversity_as_reward || a.hamming_as_reward) ? 0.0 : cfg.alpha_div;
    k.clip_eps = cfg.clip_eps;
    k.dpo_beta = cfg.dpo_beta;
    return k;
}

reward::Weights effective_weights(const TrainConfig& cfg)
{
    auto w = cfg.weights;
    if (cfg.ablation.tm_only) {
        w.structure = 1.0;
        w.ddg = 0.0;
    } else if (cfg.ablation.ddg_only) {
        w.structure = 0.0;
        w.ddg = 1.0;
    }
    return w;
}

std::vector<double> CandidateGroup::composites() const
{
    std::vector<double> out;
    for (const auto& r : rewards) {
        out.push_back(r.composite);
    }
    return out;
}

std::vector<Sequence> CandidateGroup::sequences() const
{
    std::vector<Sequence> out;
    for (const auto& r : rollouts) {
        out.push_back(r.sequence);
    }
    return out;
}

std::vector<double> group_advantages(std::span<const double> rewards, double eps)
{
    require(!rewards.empty(), ErrorKind::usage, "empty reward group");
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (auto r : rewards) {
        var += (r - mean) * (r - mean);
    }
    const double sd = std::sqrt(var / n);
    std::vector<double> out;
    if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) {
        return std::vector<double>(rewards.size(), 0.0);  // the mean can round off the common value
    }
    for (auto r : rewards) {
        out.push_back((r - mean) / (sd + eps));
    }
    return out;
}

double gate_pass_fraction(std::span<const reward::RewardBundle> rewards, double threshold)
{
    if (rewards.empty()) {
        return 0.0;
    }
    std::size_t pass = 0;
    for (const auto& r : rewards) {
        pass += r.structure_raw >= threshold ? 1 : 0;
    }
    return static_cast<double>(pass) / static_cast<double>(rewards.size());
}

void score_group(const PolicyParams& snapshot, CandidateGroup& group, const TrainConfig& cfg)
{
    require(group.target != nullptr, ErrorKind::usage, "group has no target");
    const auto seqs = group.sequences();
    std::vector<double> bonus;
    if (cfg.ablation.diversity_as_reward) {
        std::vector<diversity::Embedding> z;
        for (const auto& r : group.rollouts) {
            z.push_back(r.embedding);
        }
        bonus = diversity::embedding_distance_to_rest(z);
    } else if (cfg.ablation.hamming_as_reward) {
        bonus = diversity::hamming_distance_to_rest(seqs);
    }
    group.rewards = reward::evaluate_group(snapshot, *group.target, seqs, effective_weights(cfg), bonus);
    const auto r = group.composites();
    group.advantages = group_advantages(r);
    group.gate_pass_fraction = gate_pass_fraction(group.rewards, cfg.gate_threshold);
    group.gated = group.gate_pass_fraction >= cfg.gate_fraction;
}

CandidateGroup make_group(const PolicyParams& snapshot, const lattice::BackboneTarget& target,
                          std::size_t target_index, const TrainConfig& cfg, Rng& rng)
{
    CandidateGroup g;
    g.target_index = target_index;
    g.target = &target;
    g.sampler = cfg.sampler;
    g.rollouts = policy::sample(snapshot, target, cfg.group_size, cfg.sampler, rng);
    score_group(snapshot, g, cfg);
    return g;
}

std::size_t best_index(const CandidateGroup& group, bool* tie)
{
    require(!group.rewards.empty(), ErrorKind::usage, "group has no rewards");
    std::size_t best = 0;
    for (std::size_t i = 1; i < group.rewards.size(); ++i) {
        if (group.rewards[i].composite > group.rewards[best].composite) {
            best = i;
        }
    }
    if (tie != nullptr) {
        *tie = false;
        for (std::size_t i = 0; i < group.rewards.size(); ++i) {
            if (i != best && group.rewards[i].composite == group.rewards[best].composite) {
                *tie = true;
            }
        }
    }
    return best;
}

namespace {

// Runs body(i) for i in [0, n), serially or across OpenMP threads. The first
// exception is rethrown on the calling thread.
template <typename F>
void for_range(std::size_t n, Execution exec, F&& body)
{
    if (exec == Execution::serial) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(pzero_rl_error)
            if (!error) {
                error = std::current_exception();
            }
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

// One teacher-forced sequence under theta (with tape) and under the reference.
struct Unit {
    policy::Condition cond;
    Sequence y;
    policy::Tape tape;
    std::vector<std::vector<double>> p;     // untempered theta distributions
    std::vector<std::vector<double>> pref;  // reference distributions
    std::vector<std::vector<double>> states;
    std::vector<double> mask;
    std::vector<double> z;
    policy::Adjoints adj;
};

void forward_units(const PolicyParams& params, const PolicyParams& ref, std::vector<Unit>& units, Execution exec)
{
    for_range(units.size(), exec, [&](std::size_t i) {
        auto& u = units[i];
        u.tape = policy::forward(params, u.cond, u.y);
        const auto tref = policy::forward(ref, u.cond, u.y);
        const std::size_t L = u.y.size();
        u.p.resize(L);
        u.pref.resize(L);
        u.states.resize(L);
        for (std::size_t t = 0; t < L; ++t) {
            u.p[t] = policy::softmax(u.tape.logits[t]);
            u.pref[t] = policy::softmax(tref.logits[t]);
            const auto h = u.tape.token_state(t);
            u.states[t].assign(h.begin(), h.end());
        }
        u.mask.assign(L, 1.0);
        u.z = policy::pooled_embedding(u.states, u.mask);
        u.adj = policy::Adjoints::zeros(u.tape);
    });
}

// Per-unit gradients summed in unit order, so the result does not depend on
// the thread count.
PolicyParams backward_units(const PolicyParams& params, const std::vector<Unit>& units, Execution exec)
{
    std::vector<PolicyParams> grads(units.size());
    for_range(units.size(), exec, [&](std::size_t i) {
        grads[i] = params.zeros_like();
        policy::backward(params, units[i].tape, units[i].adj, grads[i]);
    });
    auto total = params.zeros_like();
    for (const auto& g : grads) {
        total.axpy(1.0, g);
    }
    return total;
}

// Sum over positions of the exact KL; adds scale * d/dlogits to the adjoints.
double add_kl(Unit& u, double scale)
{
    double sum = 0.0;
    for (std::size_t t = 0; t < u.y.size(); ++t) {
        sum += policy::categorical_kl(u.p[t], u.pref[t]);
        if (scale != 0.0) {
            const auto g = policy::categorical_kl_logit_grad(u.p[t], u.pref[t]);
            for (std::size_t a = 0; a < g.size(); ++a) {
                u.adj.logits[t][a] += scale * g[a];
            }
        }
    }
    return sum;
}

// D_cos over the given units; adds scale * dD/dh to their token-state adjoints.
double add_diversity(std::vector<Unit*> members, double scale)
{
    std::vector<diversity::Embedding> z;
    for (auto* u : members) {
        z.push_back(u->z);
    }
    const double d = diversity::d_cos(z);
    if (scale != 0.0) {
        const auto dz = diversity::d_cos_grad(z);
        for (std::size_t i = 0; i < members.size(); ++i) {
            auto& u = *members[i];
            const auto dh = policy::pooled_embedding_backward(u.states, u.mask, dz[i]);
            for (std::size_t t = 0; t < dh.size(); ++t) {
                for (std::size_t k = 0; k < dh[t].size(); ++k) {
                    u.adj.token_state[t][k] += scale * dh[t][k];
                }
            }
        }
    }
    return d;
}

// Sum over positions of log p(y_t); adds scale * d/dlogits.
double add_log_likelihood(Unit& u, double scale)
{
    double sum = 0.0;
    for (std::size_t t = 0; t < u.y.size(); ++t) {
        const auto y = u.y[t];
        sum += std::log(u.p[t][y]);
        for (std::size_t a = 0; a < u.p[t].size(); ++a) {
            u.adj.logits[t][a] += scale * ((a == y ? 1.0 : 0.0) - u.p[t][a]);
        }
    }
    return sum;
}

double reference_log_likelihood(const Unit& u)
{
    double sum = 0.0;
    for (std::size_t t = 0; t < u.y.size(); ++t) {
        sum += std::log(u.pref[t][u.y[t]]);
    }
    return sum;
}

double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x)
{
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::vector<double> truncated(std::span<const double> logits, std::span<const double> kept, double temperature)
{
    std::vector<double> scaled(logits.begin(), logits.end());
    for (auto& v : scaled) {
        v /= temperature;
    }
    auto q = policy::softmax(scaled);
    double mass = 0.0;
    for (std::size_t a = 0; a < q.size(); ++a) {
        if (kept[a] > 0.0) {
            mass += q[a];
        } else {
            q[a] = 0.0;
        }
    }
    for (auto& v : q) {
        v /= mass;
    }
    return q;
}

LossAndGrad empty_result(const PolicyParams& params, const Coefficients& k)
{
    LossAndGrad out{{}, params.zeros_like()};
    out.terms.kl_coef = k.kl;
    out.terms.div_coef = k.div;
    return out;
}

}  // namespace

LossAndGrad kl_to_ref(const PolicyParams& params, const PolicyParams& ref, const policy::Condition& cond,
                      std::span<const Sequence> sequences)
{
    params.check_compatible(ref);
    require(!sequences.empty(), ErrorKind::usage, "no sequences for the KL term");
    std::vector<Unit> units;
    std::size_t positions = 0;
    for (const auto& y : sequences) {
        units.push_back({cond, y, {}, {}, {}, {}, {}, {}, {}});
        positions += y.size();
    }
    forward_units(params, ref, units, Execution::serial);
    LossAndGrad out{{}, params.zeros_like()};
    const double scale = 1.0 / static_cast<double>(positions);
    for (auto& u : units) {
        out.terms.kl += scale * add_kl(u, scale);
    }
    out.grad = backward_units(params, units, Execution::serial);
    out.terms.kl_coef = 1.0;
    out.terms.total = out.terms.kl;
    out.terms.sequences = units.size();
    return out;
}

std::vector<double> importance_ratios(const PolicyParams& params, const lattice::BackboneTarget& target,
                                      const policy::RolloutRecord& rollout, const policy::Sampler& sampler)
{
    require(rollout.token_dist.size() == rollout.sequence.size() &&
                rollout.token_logprob.size() == rollout.sequence.size(),
            ErrorKind::usage, "rollout is missing its stored sampling distributions");
    const auto tape = policy::forward(params, policy::Condition::of(target), rollout.sequence);
    std::vector<double> rho;
    for (std::size_t t = 0; t < rollout.sequence.size(); ++t) {
        const auto q = truncated(tape.logits[t], rollout.token_dist[t], sampler.temperature);
        const auto y = rollout.sequence[t];
        rho.push_back(q[y] / rollout.token_dist[t][y]);
    }
    return rho;
}

double clipped_surrogate(double rho, double advantage, double eps)
{
    return std::min(rho * advantage, std::clamp(rho, 1.0 - eps, 1.0 + eps) * advantage);
}

LossAndGrad grpo_loss(const PolicyParams& params, const PolicyParams& ref, std::span<const CandidateGroup> groups,
                      const Coefficients& k, Execution exec)
{
    params.check_compatible(ref);
    auto out = empty_result(params, k);
    std::vector<const CandidateGroup*> gated;
    for (const auto& g : groups) {
        if (g.gated) {
            gated.push_back(&g);
        }
    }
    if (gated.empty()) {
        return out;
    }
    std::vector<Unit> units;
    std::vector<std::size_t> first;  // first unit of each gated group
    std::size_t positions = 0;
    for (const auto* g : gated) {
        first.push_back(units.size());
        require(g->advantages.size() == g->rollouts.size(), ErrorKind::usage, "group advantages missing");
        const auto cond = policy::Condition::of(*g->target);
        for (const auto& r : g->rollouts) {
            require(r.token_dist.size() == r.sequence.size() && r.token_logprob.size() == r.sequence.size(),
                    ErrorKind::usage, "rollout is missing its stored sampling distributions");
            units.push_back({cond, r.sequence, {}, {}, {}, {}, {}, {}, {}});
            positions += r.sequence.size();
        }
    }
    first.push_back(units.size());
    forward_units(params, ref, units, exec);

    const double inv_seq = 1.0 / static_cast<double>(units.size());
    const double inv_pos = 1.0 / static_cast<double>(positions);
    const double inv_groups = 1.0 / static_cast<double>(gated.size());
    const double lo = 1.0 - k.clip_eps;
    const double hi = 1.0 + k.clip_eps;
    for (std::size_t gi = 0; gi < gated.size(); ++gi) {
        const auto& g = *gated[gi];
        const double tau = g.sampler.temperature;
        double reward_part = 0.0;
        double kl_part = 0.0;
        std::vector<Unit*> members;
        for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
            auto& u = units[first[gi] + i];
            const auto& rec = g.rollouts[i];
            const double A = g.advantages[i];
            const double L = static_cast<double>(u.y.size());
            double surrogate = 0.0;
            for (std::size_t t = 0; t < u.y.size(); ++t) {
                const auto y = u.y[t];
                const auto q = truncated(u.tape.logits[t], rec.token_dist[t], tau);
                const double rho = q[y] / rec.token_dist[t][y];
                const double unclipped = rho * A;
                const double clipped = std::clamp(rho, lo, hi) * A;
                surrogate += clipped_surrogate(rho, A, k.clip_eps);
                if (unclipped <= clipped && A != 0.0) {
                    // d(rho A)/dz_a = A rho (1[a = y] - q_a) / tau on the kept set
                    const double scale = -inv_seq / L * A * rho / tau;
                    for (std::size_t a = 0; a < q.size(); ++a) {
                        if (rec.token_dist[t][a] > 0.0) {
                            u.adj.logits[t][a] += scale * ((a == y ? 1.0 : 0.0) - q[a]);
                        }
                    }
                }
            }
            reward_part += -inv_seq * surrogate / L;
            kl_part += inv_pos * add_kl(u, k.kl * inv_pos);
            members.push_back(&u);
        }
        const double div_part = inv_groups * add_diversity(members, -k.div * inv_groups);
        out.terms.reward += reward_part;
        out.terms.kl += kl_part;
        out.terms.d_cos += div_part;
        out.terms.total += reward_part + k.kl * kl_part - k.div * div_part;
    }
    out.grad = backward_units(params, units, exec);
    out.terms.sequences = units.size();
    out.terms.groups = gated.size();
    return out;
}

LossAndGrad raft_loss(const PolicyParams& params, const PolicyParams& ref, std::span<const CandidateGroup> groups,
                      const Coefficients& k, Execution exec)
{
    params.check_compatible(ref);
    auto out = empty_result(params, k);
    std::vector<Unit> units;
    std::size_t positions = 0;
    for (const auto& g : groups) {
        if (!g.gated) {
            continue;
        }
        const auto& best = g.rollouts[best_index(g)];
        units.push_back({policy::Condition::of(*g.target), best.sequence, {}, {}, {}, {}, {}, {}, {}});
        positions += best.sequence.size();
    }
    if (units.empty()) {
        return out;
    }
    forward_units(params, ref, units, exec);
    const double inv_n = 1.0 / static_cast<double>(units.size());
    const double inv_pos = 1.0 / static_cast<double>(positions);
    std::vector<Unit*> members;
    for (auto& u : units) {
        const double L = static_cast<double>(u.y.size());
        const double ce = -inv_n / L * add_log_likelihood(u, inv_n / L * -1.0);
        const double kl = inv_pos * add_kl(u, k.kl * inv_pos);
        out.terms.reward += ce;
        out.terms.kl += kl;
        out.terms.total += ce + k.kl * kl;
        members.push_back(&u);
    }
    if (members.size() >= 2) {
        const double d = add_diversity(members, -k.div);
        out.terms.d_cos = d;
        out.terms.total -= k.div * d;
    }
    out.grad = backward_units(params, units, exec);
    out.terms.sequences = units.size();
    out.terms.groups = units.size();
    return out;
}

LossAndGrad likelihood_loss(const PolicyParams& params, std::span<const lattice::BackboneTarget* const> targets,
                            std::span<const Sequence> sequences, Execution exec)
{
    require(targets.size() == sequences.size() && !targets.empty(), ErrorKind::usage,
            "likelihood loss needs one sequence per target");
    std::vector<Unit> units;
    std::size_t positions = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        auto cond = targets[i] != nullptr ? policy::Condition::of(*targets[i]) : policy::Condition::masked_condition();
        units.push_back({std::move(cond), sequences[i], {}, {}, {}, {}, {}, {}, {}});
        positions += sequences[i].size();
    }
    forward_units(params, params, units, exec);
    const double scale = 1.0 / static_cast<double>(positions);
    LossAndGrad out{{}, params.zeros_like()};
    for (auto& u : units) {
        out.terms.reward -= scale * add_log_likelihood(u, -scale);
    }
    out.terms.total = out.terms.reward;
    out.terms.sequences = units.size();
    out.grad = backward_units(params, units, exec);
    return out;
}

const char* to_string(Corpus c) noexcept
{
    return c == Corpus::designing ? "designing" : "wild_type";
}

Corpus parse_corpus(const std::string& s)
{
    if (s == "designing") {
        return Corpus::designing;
    }
    if (s == "wild_type") {
        return Corpus::wild_type;
    }
    fail(ErrorKind::config, "unknown pretraining corpus '" + s + "' (designing, wild_type)");
}

void PretrainConfig::validate() const
{
    require(steps >= 0, ErrorKind::config, "pretrain steps must be nonnegative");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::config,
            "pretrain learning rate must be finite and nonnegative");
}

double pretrain(PolicyParams& params, std::span<const lattice::BackboneTarget* const> targets,
                const PretrainConfig& cfg, Execution exec)
{
    cfg.validate();
    std::vector<const lattice::BackboneTarget*> conds;
    std::vector<Sequence> wild;
    for (const auto* t : targets) {
        auto seqs = cfg.corpus == Corpus::designing ? lattice::designing_sequences(*t) : std::vector<Sequence>{};
        if (seqs.empty()) {
            seqs.push_back(t->wild_type);
        }
        for (auto& y : seqs) {
            conds.push_back(t);
            wild.push_back(y);
            if (cfg.masked_prior) {
                conds.push_back(nullptr);
                wild.push_back(y);
            }
        }
    }
    for (int s = 0; s < cfg.steps; ++s) {
        const auto lg = likelihood_loss(params, conds, wild, exec);
        params.axpy(-cfg.learning_rate, lg.grad);
    }
    require(params.all_finite(), ErrorKind::convergence, "pretraining diverged; lower its learning rate");
    return likelihood_loss(params, conds, wild, exec).terms.reward;
}

std::vector<PreferencePair> preference_pairs(std::span<const CandidateGroup> groups)
{
    std::vector<PreferencePair> pairs;
    for (const auto& g : groups) {
        if (!g.gated) {
            continue;
        }
        std::size_t best = 0;
        std::size_t worst = 0;
        for (std::size_t i = 1; i < g.rewards.size(); ++i) {
            if (g.rewards[i].composite > g.rewards[best].composite) {
                best = i;
            }
            if (g.rewards[i].composite < g.rewards[worst].composite) {
                worst = i;
            }
        }
        const auto& yw = g.rollouts[best].sequence;
        const auto& yl = g.rollouts[worst].sequence;
        if (yw == yl) {
            continue;
        }
        pairs.push_back({g.target, yw, yl});
    }
    return pairs;
}

LossAndGrad dpo_loss(const PolicyParams& params, const PolicyParams& ref, std::span<const PreferencePair> pairs,
                     const Coefficients& k, bool with_diversity, Execution exec)
{
    params.check_compatible(ref);
    auto out = empty_result(params, k);
    if (!with_diversity) {
        out.terms.div_coef = 0.0;
    }
    if (pairs.empty()) {
        return out;
    }
    std::vector<Unit> units;  // chosen, rejected interleaved
    std::size_t positions = 0;
    for (const auto& pr : pairs) {
        const auto cond = policy::Condition::of(*pr.target);
        units.push_back({cond, pr.chosen, {}, {}, {}, {}, {}, {}, {}});
        units.push_back({cond, pr.rejected, {}, {}, {}, {}, {}, {}, {}});
        positions += pr.chosen.size() + pr.rejected.size();
    }
    forward_units(params, ref, units, exec);
    const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
    const double inv_pos = 1.0 / static_cast<double>(positions);
    const double beta = k.dpo_beta;
    std::vector<Unit*> chosen;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        auto& w = units[2 * p];
        auto& l = units[2 * p + 1];
        // margin first (without gradient), then the likelihood adjoints
        double lw = 0.0;
        double ll = 0.0;
        for (std::size_t t = 0; t < w.y.size(); ++t) {
            lw += std::log(w.p[t][w.y[t]]);
        }
        for (std::size_t t = 0; t < l.y.size(); ++t) {
            ll += std::log(l.p[t][l.y[t]]);
        }
        const double m = (lw - ll) - (reference_log_likelihood(w) - reference_log_likelihood(l));
        const double pref = inv_pairs * softplus(-beta * m);
        const double dm = -inv_pairs * beta * sigmoid(-beta * m);
        if (dm != 0.0) {
            add_log_likelihood(w, dm);
            add_log_likelihood(l, -dm);
        }
        const double kl = inv_pos * (add_kl(w, k.kl * inv_pos) + add_kl(l, k.kl * inv_pos));
        out.terms.reward += pref;
        out.terms.kl += kl;
        out.terms.total += pref + k.kl * kl;
        chosen.push_back(&w);
    }
    if (with_diversity && chosen.size() >= 2) {
        const double d = add_diversity(chosen, -k.div);
        out.terms.d_cos = d;
        out.terms.total -= k.div * d;
    }
    out.grad = backward_units(params, units, exec);
    out.terms.sequences = units.size();
    out.terms.groups = pairs.size();
    return out;
}

namespace {

template <typename LossFn>
StepResult descend(PolicyParams& params, const TrainConfig& cfg, LossFn&& loss)
{
    StepResult res;
    for (int u = 0; u < cfg.updates_per_iteration; ++u) {
        auto lg = loss(params);
        if (u == 0) {
            res.first = lg.terms;
            if (lg.terms.sequences == 0) {
                res.skipped = true;
                return res;
            }
        }
        params.axpy(-cfg.learning_rate, lg.grad);
        ++res.updates;
    }
    require(params.all_finite(), ErrorKind::convergence, "parameters became non-finite; lower the learning rate");
    return res;
}

}  // namespace

StepResult grpo_step(PolicyParams& params, const PolicyParams& ref, std::span<const CandidateGroup> groups,
                     const TrainConfig& cfg, Execution exec)
{
    const auto k = effective_coefficients(cfg);
    return descend(params, cfg, [&](const PolicyParams& p) { return grpo_loss(p, ref, groups, k, exec); });
}

StepResult raft_step(PolicyParams& params, const PolicyParams& ref, std::span<const CandidateGroup> groups,
                     const TrainConfig& cfg, Execution exec)
{
    const auto k = effective_coefficients(cfg);
    return descend(params, cfg, [&](const PolicyParams& p) { return raft_loss(p, ref, groups, k, exec); });
}

StepResult dpo_step(PolicyParams& params, const PolicyParams& ref, std::span<const PreferencePair> pairs,
                    const TrainConfig& cfg, Execution exec)
{
    const auto k = effective_coefficients(cfg);
    return descend(params, cfg,
                   [&](const PolicyParams& p) { return dpo_loss(p, ref, pairs, k, cfg.dpo_diversity, exec); });
}

nlohmann::json IterationMetrics::to_json() const
{
    nlohmann::json j;
    j["iteration"] = iteration;
    j["algorithm"] = algorithm;
    j["mean_reward"] = mean_reward;
    j["mean_structure"] = mean_structure;
    j["mean_fast_ddg"] = mean_fast_ddg;
    j["kl"] = kl;
    j["d_cos"] = d_cos;
    j["hamming"] = hamming;
    j["entropy_lb"] = entropy_lb;
    j["gated_fraction"] = gated_fraction;
    j["distinct_per_group"] = distinct_per_group;
    j["argmax_ties"] = argmax_ties;
    j["pairs"] = pairs;
    j["skipped"] = skipped;
    j["loss"] = {{"total", loss.total},
                 {"reward_term", loss.reward},
                 {"kl_term", loss.kl},
                 {"d_cos_term", loss.d_cos},
                 {"kl_coef", loss.kl_coef},
                 {"div_coef", loss.div_coef}};
    if (exact_entropy_margin) {
        j["exact_entropy_margin"] = *exact_entropy_margin;
    }
    return j;
}

std::vector<CandidateGroup> collect_groups(const PolicyParams& snapshot,
                                           std::span<const lattice::BackboneTarget* const> targets,
                                           const TrainConfig& cfg, int iteration, Execution exec,
                                           const policy::Sampler& sampler)
{
    auto local = cfg;
    local.sampler = sampler;
    std::vector<CandidateGroup> groups(targets.size());
    for_range(targets.size(), exec, [&](std::size_t i) {
        Rng rng(derive_seed(cfg.seed, "rollout", static_cast<std::uint64_t>(iteration), i));
        groups[i] = make_group(snapshot, *targets[i], i, local, rng);
    });
    return groups;
}

namespace {

double exact_entropy_margin(const PolicyParams& params, const lattice::BackboneTarget& target,
                            const policy::Sampler& sampler)
{
    const auto e = policy::enumerate_sequences(params, policy::Condition::of(target), target.length(), sampler);
    double h = 0.0;
    std::vector<double> mean(e.embedding.front().size(), 0.0);
    for (std::size_t i = 0; i < e.sequences.size(); ++i) {
        const double p = e.probability[i];
        if (p > 0.0) {
            h -= p * std::log(p);
        }
        for (std::size_t k = 0; k < mean.size(); ++k) {
            mean[k] += p * e.embedding[i][k];
        }
    }
    double sq = 0.0;
    for (auto v : mean) {
        sq += v * v;
    }
    return h - diversity::entropy_lower_bound(1.0 - sq).entropy;
}

}  // namespace

IterationMetrics run_iteration(TrainerState& state, std::span<const lattice::BackboneTarget* const> targets,
                               const TrainConfig& cfg, Execution exec)
{
    cfg.validate();
    require(!targets.empty(), ErrorKind::usage, "no training targets");
    const int it = state.iteration + 1;
    const PolicyParams old = state.policy;

    // groups sampled from the current policy at the training sampler (for DPO
    // these only feed the metrics)
    auto groups = collect_groups(old, targets, cfg, it, exec, cfg.sampler);

    IterationMetrics m;
    m.iteration = it;
    m.algorithm = to_string(cfg.algorithm);
    StepResult step;
    switch (cfg.algorithm) {
    case Algorithm::grpo:
        step = grpo_step(state.policy, state.reference, groups, cfg, exec);
        break;
    case Algorithm::raft:
        step = raft_step(state.policy, state.reference, groups, cfg, exec);
        for (const auto& g : groups) {
            bool tie = false;
            if (g.gated) {
                best_index(g, &tie);
                m.argmax_ties += tie ? 1 : 0;
            }
        }
        break;
    case Algorithm::dpo:
    case Algorithm::multi_dpo: {
        // single-round pairs come from the reference once (a fixed stream, so
        // every iteration sees the same pairs); multi-round resamples
        const bool multi = cfg.algorithm == Algorithm::multi_dpo;
        auto pair_groups = collect_groups(multi ? old : state.reference, targets, cfg, multi ? it : 0, exec,
                                          cfg.dpo_sampler);
        const auto pairs = preference_pairs(pair_groups);
        m.pairs = pairs.size();
        step = dpo_step(state.policy, state.reference, pairs, cfg, exec);
        break;
    }
    }
    m.skipped = step.skipped;
    m.loss = step.first;

    double reward = 0.0;
    double structure = 0.0;
    double ddg = 0.0;
    double dcos = 0.0;
    double ham = 0.0;
    double elb = 0.0;
    double distinct = 0.0;
    std::size_t n = 0;
    std::size_t gated = 0;
    std::size_t kl_positions = 0;
    double kl_sum = 0.0;
    for (const auto& g : groups) {
        std::vector<diversity::Embedding> z;
        for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
            reward += g.rewards[i].composite;
            structure += g.rewards[i].structure_raw;
            ddg += g.rewards[i].fast_ddg;
            z.push_back(g.rollouts[i].embedding);
            ++n;
        }
        const auto seqs = g.sequences();
        const double d = diversity::d_cos(z);
        dcos += d;
        ham += diversity::hamming_diversity(seqs);
        elb += diversity::entropy_lower_bound(diversity::d_cos_offdiag_estimate(z).diversity).entropy;
        distinct += static_cast<double>(diversity::distinct_count(seqs));
        gated += g.gated ? 1 : 0;
        const auto kl = kl_to_ref(old, state.reference, policy::Condition::of(*g.target), seqs);
        for (const auto& y : seqs) {
            kl_positions += y.size();
        }
        kl_sum += kl.terms.kl * static_cast<double>(kl.terms.sequences * g.target->length());
    }
    const double ng = static_cast<double>(groups.size());
    m.mean_reward = reward / static_cast<double>(n);
    m.mean_structure = structure / static_cast<double>(n);
    m.mean_fast_ddg = ddg / static_cast<double>(n);
    m.d_cos = dcos / ng;
    m.hamming = ham / ng;
    m.entropy_lb = elb / ng;
    m.distinct_per_group = distinct / ng;
    m.gated_fraction = static_cast<double>(gated) / ng;
    m.kl = kl_sum / static_cast<double>(kl_positions);
    require(m.kl >= -1e-15, ErrorKind::domain, "negative KL estimate");

    if (targets.front()->length() <= 4) {
        double worst = INFINITY;
        for (const auto* t : targets) {
            worst = std::min(worst, exact_entropy_margin(old, *t, cfg.sampler));
        }
        m.exact_entropy_margin = worst;
    }
    state.iteration = it;
    return m;
}

}  // namespace pzero::rl
