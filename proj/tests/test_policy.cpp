#include <chrono>
#include <cmath>
#include <map>

#include "doctest.h"
#include "pzero/diversity.hpp"
#include "pzero/error.hpp"
#include "pzero/policy.hpp"
#include "pzero/rl.hpp"
#include "support.hpp"

using namespace pzero;
using policy::PolicyParams;

namespace {

lattice::BackboneTarget random_target(std::size_t length, Rng& rng)
{
    const auto& space = lattice::FoldSpace::get(static_cast<int>(length));
    const auto s = static_cast<std::size_t>(rng.next() % space.state_count());
    return lattice::make_target("r", space.walk(s), from_hydrophobic_mask(0, length));
}

Sequence random_sequence(std::size_t length, Rng& rng)
{
    return from_hydrophobic_mask(static_cast<std::uint32_t>(rng.next()), length);
}

std::vector<double> embedding(const PolicyParams& p, const policy::Condition& c, const Sequence& y,
                              policy::Tape* keep = nullptr)
{
    auto tape = policy::forward(p, c, y);
    std::vector<std::vector<double>> states(tape.hidden.begin() + 1, tape.hidden.end());
    std::vector<double> mask(y.size(), 1.0);
    auto z = policy::pooled_embedding(states, mask);
    if (keep) *keep = std::move(tape);
    return z;
}

double dcos_of(const PolicyParams& p, const policy::Condition& c, const std::vector<Sequence>& ys)
{
    std::vector<diversity::Embedding> z;
    for (const auto& y : ys) z.push_back(embedding(p, c, y));
    return diversity::d_cos(z);
}

// Gradient of D_cos assembled from the public pieces.
PolicyParams dcos_grad(const PolicyParams& p, const policy::Condition& c, const std::vector<Sequence>& ys)
{
    std::vector<policy::Tape> tapes(ys.size());
    std::vector<diversity::Embedding> z;
    for (std::size_t i = 0; i < ys.size(); ++i) z.push_back(embedding(p, c, ys[i], &tapes[i]));
    const auto dz = diversity::d_cos_grad(z);
    auto g = p.zeros_like();
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const auto& tape = tapes[i];
        std::vector<std::vector<double>> states(tape.hidden.begin() + 1, tape.hidden.end());
        std::vector<double> mask(ys[i].size(), 1.0);
        auto adj = policy::Adjoints::zeros(tape);
        adj.token_state = policy::pooled_embedding_backward(states, mask, dz[i]);
        policy::backward(p, tape, adj, g);
    }
    return g;
}

}  // namespace

TEST_CASE("gradient exactness on a 20-case seed suite")
{
    const auto start = std::chrono::steady_clock::now();
    double worst_ll = 0.0, worst_kl = 0.0, worst_div = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CAPTURE(seed);
        Rng rng(derive_seed(seed, "fd"));
        const std::size_t L = 3 + seed % 4;
        const auto params = testing::small_params(L, derive_seed(seed, "theta"));
        const auto ref = testing::small_params(L, derive_seed(seed, "ref"));
        const auto target = random_target(L, rng);
        const auto cond = policy::Condition::of(target);
        std::vector<Sequence> ys;
        for (int i = 0; i < 3; ++i) ys.push_back(random_sequence(L, rng));
        std::vector<const lattice::BackboneTarget*> conds(ys.size(), &target);
        conds[1] = nullptr;  // one masked unit

        const auto ll = rl::likelihood_loss(params, conds, ys);
        worst_ll = std::max(worst_ll, testing::worst_fd_error(params, ll.grad, [&](const PolicyParams& p) {
                                return rl::likelihood_loss(p, conds, ys).terms.total;
                            }));
        const auto kl = rl::kl_to_ref(params, ref, cond, ys);
        worst_kl = std::max(worst_kl, testing::worst_fd_error(params, kl.grad, [&](const PolicyParams& p) {
                                return rl::kl_to_ref(p, ref, cond, ys).terms.total;
                            }));
        const auto g = dcos_grad(params, cond, ys);
        worst_div = std::max(worst_div, testing::worst_fd_error(params, g, [&](const PolicyParams& p) {
                                 return dcos_of(p, cond, ys);
                             }));
    }
    CHECK(worst_ll < 1e-4);
    CHECK(worst_kl < 1e-4);
    CHECK(worst_div < 1e-4);
    MESSAGE("worst relative errors: loglik " << worst_ll << ", kl " << worst_kl << ", d_cos " << worst_div);
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 60.0);
}

TEST_CASE("log-likelihood gradient against the tape directly")
{
    // sum log p(y|x) through policy::backward with hand-built logit adjoints
    Rng rng(3);
    const auto params = testing::small_params(5, 11);
    const auto target = random_target(5, rng);
    const auto cond = policy::Condition::of(target);
    const auto y = random_sequence(5, rng);
    const auto tape = policy::forward(params, cond, y);
    auto adj = policy::Adjoints::zeros(tape);
    for (std::size_t t = 0; t < y.size(); ++t) {
        const auto p = policy::softmax(tape.logits[t]);
        for (std::size_t a = 0; a < p.size(); ++a) adj.logits[t][a] = (a == y[t] ? 1.0 : 0.0) - p[a];
    }
    auto g = params.zeros_like();
    policy::backward(params, tape, adj, g);
    CHECK(testing::worst_fd_error(params, g, [&](const PolicyParams& p) {
              return policy::log_prob(p, cond, y).total;
          }) < 1e-4);

    // a constant loss has all-zero adjoints and so a zero gradient
    auto zero = params.zeros_like();
    policy::backward(params, tape, policy::Adjoints::zeros(tape), zero);
    CHECK(zero == params.zeros_like());
}

TEST_CASE("D_cos gradient direction")
{
    Rng rng(8);
    const std::size_t L = 6;
    auto params = testing::small_params(L, 21);
    const auto target = random_target(L, rng);
    const auto cond = policy::Condition::of(target);

    // two copies of one rollout: cosine is at its maximum, the gradient vanishes
    const auto y = random_sequence(L, rng);
    const auto g0 = dcos_grad(params, cond, {y, y});
    CHECK(std::sqrt(g0.dot(g0)) < 1e-12);

    // nearly identical pair: a small ascent step lowers their cosine
    auto y2 = y;
    y2.tokens[L - 1] ^= 1;
    const auto before = dcos_of(params, cond, {y, y2});
    const auto g = dcos_grad(params, cond, {y, y2});
    params.axpy(1e-3 / std::sqrt(g.dot(g)), g);
    CHECK(dcos_of(params, cond, {y, y2}) > before);
}

TEST_CASE("uniform policy log-probabilities")
{
    policy::Dimensions d;
    d.features = policy::feature_count(5);
    const auto zero = PolicyParams::zeros(Alphabet(), d);
    Rng rng(1);
    const auto target = random_target(5, rng);
    const auto lp = policy::log_prob(zero, target, parse_sequence("HPHHP"));
    for (double v : lp.per_token) CHECK(v == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(lp.total == doctest::Approx(-5 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("probability normalization by enumeration")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (std::size_t L = 1; L <= 4; ++L) {
            CAPTURE(seed);
            CAPTURE(L);
            Rng rng(seed);
            const auto params = testing::small_params(std::max<std::size_t>(L, 3), seed, 1.5);
            policy::Condition cond = policy::Condition::masked_condition();
            if (L >= 3) cond = policy::Condition::of(random_target(L, rng));
            if (L < 3) {
                // chains shorter than three have no contact features
                auto p = testing::small_params(L, seed, 1.5);
                double s = 0.0;
                for (std::uint32_t m = 0; m < (1u << L); ++m)
                    s += std::exp(policy::log_prob(p, cond, from_hydrophobic_mask(m, L)).total);
                CHECK(std::abs(s - 1.0) < 1e-9);
                continue;
            }
            // brute force over all 2^L sequences
            double s = 0.0;
            for (std::uint32_t m = 0; m < (1u << L); ++m)
                s += std::exp(policy::log_prob(params, cond, from_hydrophobic_mask(m, L)).total);
            CHECK(std::abs(s - 1.0) < 1e-9);
            for (policy::Sampler smp : {policy::Sampler{1.0, 1.0}, policy::Sampler{0.8, 0.9}, policy::Sampler{0.3, 0.5}}) {
                const auto e = policy::enumerate_sequences(params, cond, L, smp);
                double t = 0.0;
                for (double p : e.probability) t += p;
                CHECK(std::abs(t - 1.0) < 1e-9);
            }
        }
    }
}

TEST_CASE("conditioning")
{
    Rng rng(2);
    auto params = testing::small_params(6, 4);
    const auto target = random_target(6, rng);
    const auto& space = lattice::FoldSpace::get(6);
    const auto straight = lattice::make_target("line", space.walk(*space.straight_state()), random_sequence(6, rng));
    CHECK(straight.contact_map().empty());
    CHECK(policy::encode_condition(params, policy::Condition::masked_condition()) ==
          policy::encode_condition(params, straight));
    CHECK(policy::encode_condition(params, target) == policy::encode_condition(params, target));

    auto flat = params;
    flat.condition_projection = policy::Matrix(flat.condition_projection.rows, flat.condition_projection.cols);
    for (double v : policy::encode_condition(flat, straight)) CHECK(v == 0.0);
    for (std::uint32_t m = 0; m < 64; ++m) {
        const auto y = from_hydrophobic_mask(m, 6);
        CHECK(policy::log_prob(flat, target, y).total ==
              policy::log_prob(flat, policy::Condition::masked_condition(), y).total);
    }
    // wrong feature count
    const auto other = testing::small_params(8, 4);
    CHECK_THROWS_AS(policy::encode_condition(other, target), Error);
}

TEST_CASE("sampler")
{
    policy::Dimensions d;
    d.features = policy::feature_count(3);
    const auto zero = PolicyParams::zeros(Alphabet(), d);
    Rng rng(123);
    const auto draws = policy::sample(zero, policy::Condition::masked_condition(), 2, 10000, {1.0, 1.0}, rng);
    std::map<Sequence, int> freq;
    for (const auto& r : draws) ++freq[r.sequence];
    CHECK(freq.size() == 4);
    const double sigma = std::sqrt(0.25 * 0.75 / 10000);
    for (auto& [y, n] : freq) CHECK(std::abs(n / 10000.0 - 0.25) < 3 * sigma);

    const std::vector<double> logits{std::log(0.6), std::log(0.4)};
    const auto q = policy::sampling_distribution(logits, {1.0, 0.5});
    CHECK(q[0] == 1.0);
    CHECK(q[1] == 0.0);
    const auto full = policy::sampling_distribution(logits, {1.0, 1.0});
    CHECK(full[0] == doctest::Approx(0.6));

    CHECK_THROWS_AS((policy::Sampler{0.0, 0.9}.validate()), Error);
    CHECK_THROWS_AS((policy::Sampler{1.0, 0.0}.validate()), Error);
    CHECK_THROWS_AS((policy::Sampler{1.0, 1.5}.validate()), Error);
}

TEST_CASE("stored rollout log-probabilities match recomputation")
{
    Rng rng(9);
    const auto params = testing::small_params(8, 77, 1.0);
    const auto target = random_target(8, rng);
    for (policy::Sampler smp : {policy::Sampler{0.8, 0.9}, policy::Sampler{1.0, 1.0}, policy::Sampler{0.5, 0.7}}) {
        const auto rs = policy::sample(params, target, 32, smp, rng);
        for (const auto& r : rs) {
            const auto again = policy::truncated_log_prob(params, policy::Condition::of(target), r.sequence, smp, r.token_dist);
            REQUIRE(again.size() == r.token_logprob.size());
            for (std::size_t t = 0; t < again.size(); ++t) CHECK(std::abs(again[t] - r.token_logprob[t]) < 1e-9);
            double n = 0.0;
            for (double v : r.embedding) n += v * v;
            CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("sampling is reproducible per seed")
{
    Rng rng(1);
    const auto params = testing::small_params(7, 5, 1.0);
    const auto target = random_target(7, rng);
    Rng a(42), b(42);
    const auto ra = policy::sample(params, target, 16, {0.8, 0.9}, a);
    const auto rb = policy::sample(params, target, 16, {0.8, 0.9}, b);
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].sequence == rb[i].sequence);
}

TEST_CASE("parameter serialization round trip")
{
    const auto params = testing::small_params(6, 99);
    const auto back = policy::params_from_json(nlohmann::json::parse(policy::serialize(params)));
    CHECK(back == params);
    CHECK(policy::serialize(back) == policy::serialize(params));
}

TEST_CASE("categorical KL closed form")
{
    const std::vector<double> p{0.9, 0.1}, q{0.5, 0.5};
    CHECK(policy::categorical_kl(p, q) == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-14));
    CHECK(policy::categorical_kl(p, q) == doctest::Approx(0.368).epsilon(1e-3));
    CHECK(policy::categorical_kl(p, p) == 0.0);
}
