#pragma once

// Conditional autoregressive policy p(y | x): a single tanh recurrent cell fed
// with the previous token's embedding and a linear projection of the target's
// contact map. Gradients are hand-derived (backprop through time).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pzero/lattice.hpp"
#include "pzero/rng.hpp"
#include "pzero/sequence.hpp"

namespace pzero::policy {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

struct Dimensions {
    std::size_t alphabet = 2;
    std::size_t embedding = 8;
    std::size_t features = 0;  // contact-map feature count, fixed by chain length
    std::size_t context = 16;
    std::size_t hidden = 32;

    bool operator==(const Dimensions&) const = default;
};

/// Number of non-adjacent residue pairs (i, j > i + 1) of a chain.
std::size_t feature_count(std::size_t length);

/// All learnable weights. Gradients use the same type.
struct PolicyParams {
    Alphabet alphabet;
    Dimensions dims;
    std::uint64_t seed = 0;

    Matrix token_embedding;       // alphabet x embedding
    Matrix condition_projection;  // features x context
    Matrix input_weights;         // hidden x (embedding + context)
    Matrix recurrent_weights;     // hidden x hidden
    std::vector<double> bias;     // hidden
    Matrix output_projection;     // hidden x alphabet

    /// All-zero parameters of the given shape.
    static PolicyParams zeros(const Alphabet& alphabet, const Dimensions& dims);
    /// Uniform(-scale, scale) per weight.
    static PolicyParams random(const Alphabet& alphabet, const Dimensions& dims, std::uint64_t seed,
                               double scale = 0.1);

    PolicyParams zeros_like() const { return zeros(alphabet, dims); }

    std::size_t size() const noexcept;
    /// Visits every scalar in a fixed order.
    template <typename F>
    void for_each(F&& f);
    template <typename F>
    void for_each(F&& f) const;

    void axpy(double a, const PolicyParams& x);  // this += a * x
    void scale(double a);
    double dot(const PolicyParams& other) const;
    bool all_finite() const;
    /// Throws a config error if `other` has a different architecture.
    void check_compatible(const PolicyParams& other) const;

    bool operator==(const PolicyParams&) const = default;
};

template <typename F>
void PolicyParams::for_each(F&& f)
{
    for (auto* m : {&token_embedding, &condition_projection, &input_weights, &recurrent_weights}) {
        for (auto& v : m->data) {
            f(v);
        }
    }
    for (auto& v : bias) {
        f(v);
    }
    for (auto& v : output_projection.data) {
        f(v);
    }
}

template <typename F>
void PolicyParams::for_each(F&& f) const
{
    const_cast<PolicyParams*>(this)->for_each([&](double& v) { f(static_cast<const double&>(v)); });
}

/// Conditioning input: the flattened contact indicators of a target, or the
/// masked (all-zero) condition that turns the network into the sequence prior.
struct Condition {
    std::vector<double> features;
    bool masked = false;

    static Condition of(const lattice::BackboneTarget& target);
    static Condition masked_condition() { return {{}, true}; }
};

/// Context vector fed to every step. Config error on a feature-count mismatch.
std::vector<double> encode_condition(const PolicyParams& params, const Condition& cond);
std::vector<double> encode_condition(const PolicyParams& params, const lattice::BackboneTarget& target);

/// Activations recorded by a teacher-forced forward pass.
struct Tape {
    std::size_t length = 0;
    Condition condition;
    std::vector<Token> tokens;
    std::vector<double> context;
    std::vector<std::vector<double>> inputs;   // length + 1 steps
    std::vector<std::vector<double>> hidden;   // length + 1 steps
    std::vector<std::vector<double>> logits;   // length steps

    /// Activation after consuming token t (the per-position decoder state used
    /// for embeddings).
    std::span<const double> token_state(std::size_t t) const { return hidden[t + 1]; }
};

Tape forward(const PolicyParams& params, const Condition& cond, const Sequence& y);

struct LogProb {
    double total = 0.0;
    std::vector<double> per_token;
    std::vector<std::vector<double>> hidden;  // token states, one per position
};

/// log p(y | x) under the untempered model distribution. A masked condition
/// gives the prior log p(y). Input error for tokens outside the alphabet.
LogProb log_prob(const PolicyParams& params, const Condition& cond, const Sequence& y);
LogProb log_prob(const PolicyParams& params, const lattice::BackboneTarget& target, const Sequence& y);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

struct Sampler {
    double temperature = 0.8;
    double top_p = 0.9;

    void validate() const;
};

/// Temperature then nucleus truncation, renormalized; zero outside the kept set.
std::vector<double> sampling_distribution(std::span<const double> logits, const Sampler& sampler);

struct RolloutRecord {
    Sequence sequence;
    std::vector<double> token_logprob;           // under the sampling distribution
    std::vector<std::vector<double>> token_dist; // sampling distribution per position
    std::vector<std::vector<double>> hidden;     // token states
    std::vector<double> mask;                    // 1 for every generated position
    std::vector<double> embedding;               // unit-norm pooled state; empty if all states are zero

    double total_logprob() const;
};

/// Mask-weighted mean of token states, then unit l2 norm.
std::vector<double> pooled_embedding(std::span<const std::vector<double>> hidden,
                                     std::span<const double> mask);

/// Adjoint of pooled_embedding: maps d(loss)/d(z) to d(loss)/d(h_t).
std::vector<std::vector<double>> pooled_embedding_backward(std::span<const std::vector<double>> hidden,
                                                           std::span<const double> mask,
                                                           std::span<const double> dz);

std::vector<RolloutRecord> sample(const PolicyParams& params, const lattice::BackboneTarget& target,
                                  std::size_t count, const Sampler& sampler, Rng& rng);
std::vector<RolloutRecord> sample(const PolicyParams& params, const Condition& cond, std::size_t length,
                                  std::size_t count, const Sampler& sampler, Rng& rng);

/// Log-probability of y under the sampling distributions restricted to the
/// kept token sets recorded in `kept` (token_dist of a rollout).
std::vector<double> truncated_log_prob(const PolicyParams& params, const Condition& cond,
                                       const Sequence& y, const Sampler& sampler,
                                       std::span<const std::vector<double>> kept);

/// Every sequence of `length` with its probability under the sampling
/// distribution (untempered when sampler is {1, 1}). Capacity error beyond
/// 2^16 sequences.
struct Enumerated {
    std::vector<Sequence> sequences;
    std::vector<double> probability;
    std::vector<std::vector<double>> embedding;  // pooled unit embeddings
};
Enumerated enumerate_sequences(const PolicyParams& params, const Condition& cond, std::size_t length,
                               const Sampler& sampler);

/// Adjoints of a scalar loss with respect to the recorded activations.
struct Adjoints {
    std::vector<std::vector<double>> logits;       // per position, alphabet-sized
    std::vector<std::vector<double>> token_state;  // per position, hidden-sized

    static Adjoints zeros(const Tape& tape);
};

/// Accumulates d(loss)/d(params) into `grad`. Usage error when the tape and
/// adjoints do not match.
void backward(const PolicyParams& params, const Tape& tape, const Adjoints& adjoints,
              PolicyParams& grad);

/// Exact categorical KL(p || q).
double categorical_kl(std::span<const double> p, std::span<const double> q);
/// d KL(softmax(z) || q) / dz given p = softmax(z).
std::vector<double> categorical_kl_logit_grad(std::span<const double> p, std::span<const double> q);

nlohmann::json to_json(const PolicyParams& params);
PolicyParams params_from_json(const nlohmann::json& j);
std::string serialize(const PolicyParams& params);

}  // namespace pzero::policy
