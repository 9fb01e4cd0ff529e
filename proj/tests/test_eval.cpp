#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pzero/config.hpp"
#include "pzero/error.hpp"
#include "pzero/eval.hpp"
#include "pzero/runner.hpp"
#include "support.hpp"

using namespace pzero;
using namespace pzero::eval;

namespace {

// Plain Spearman: Pearson of average ranks.
double spearman_oracle(std::vector<double> a, std::vector<double> b)
{
    auto rank = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, same = 0;
            for (double w : v) {
                less += w < v[i] ? 1 : 0;
                same += w == v[i] ? 1 : 0;
            }
            r[i] = less + (same + 1) / 2;
        }
        return r;
    };
    const auto ra = rank(a), rb = rank(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i] / n;
        mb += rb[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

policy::PolicyParams zero_policy(int length)
{
    policy::Dimensions d;
    d.features = policy::feature_count(static_cast<std::size_t>(length));
    return policy::PolicyParams::zeros(Alphabet(), d);
}

const Dataset& fixture() { return testing::cached_dataset(11, 3, 1, 2); }

}  // namespace

TEST_CASE("recovery rate examples")
{
    const auto wt = parse_sequence("HPPP");
    CHECK(recovery_rate(std::vector<Sequence>{wt}, wt) == 1.0);
    CHECK(recovery_rate(std::vector<Sequence>{parse_sequence("PHHH")}, wt) == 0.0);
    CHECK(recovery_rate(std::vector<Sequence>{parse_sequence("HPHP")}, wt) == 0.75);
    CHECK(recovery_rate(std::vector<Sequence>{parse_sequence("HPHP"), wt}, wt) == 0.875);
    CHECK_THROWS_AS(recovery_rate(std::vector<Sequence>{parse_sequence("HPH")}, wt), pzero::Error);
}

TEST_CASE("uniform policy at L = 8 recovers half the positions")
{
    const lattice::Walk walk{{0, 0}, {1, 0}, {2, 0}, {2, 1}, {1, 1}, {0, 1}, {0, 2}, {1, 2}};
    const auto t = testing::target_from("HPPHHPPH", walk);
    policy::Dimensions d;
    d.features = policy::feature_count(8);
    const auto params = policy::PolicyParams::zeros(Alphabet(), d);
    Rng rng(4);
    const std::size_t n = 4000;
    const auto rollouts = policy::sample(params, t, n, policy::Sampler{0.8, 0.9}, rng);
    std::vector<Sequence> designs;
    for (const auto& r : rollouts) {
        designs.push_back(r.sequence);
    }
    const double rec = recovery_rate(designs, t.wild_type);
    const double sigma = std::sqrt(0.25 / static_cast<double>(n * 8));
    CHECK(std::abs(rec - 0.5) < 3 * sigma);
}

TEST_CASE("wild-type calibration endpoints")
{
    const auto& t = fixture().targets.front();
    const std::vector<Sequence> designs(6, t.wild_type);
    const auto m = design_metrics(zero_policy(11), t, designs, EvalConfig{});
    CHECK(m.recovery == 1.0);
    CHECK(m.hamming == 0.0);
    CHECK(m.distinct == 1.0);
    CHECK(m.mean_structure == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.mean_oracle_ddg == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.mean_fast_ddg == 0.0);
}

TEST_CASE("metric invariants: permutation, conjunction bound, fractions")
{
    const auto& ds = fixture();
    const auto params = testing::small_params(11, 5, 1.0);
    Rng rng(9);
    for (const auto& t : ds.targets) {
        auto rollouts = policy::sample(params, t, 12, policy::Sampler{1.0, 1.0}, rng);
        std::vector<Sequence> designs;
        for (const auto& r : rollouts) {
            designs.push_back(r.sequence);
        }
        designs.push_back(t.wild_type);
        const auto a = design_metrics(params, t, designs, EvalConfig{});
        std::reverse(designs.begin(), designs.end());
        std::rotate(designs.begin(), designs.begin() + 3, designs.end());
        const auto b = design_metrics(params, t, designs, EvalConfig{});
        const auto ja = a.to_json(), jb = b.to_json();
        for (const auto& [k, v] : ja.items()) {
            // sums in a different order: equal up to rounding
            CHECK(v.get<double>() == doctest::Approx(jb[k].get<double>()).epsilon(1e-12));
        }
        CHECK(a.success_rate <= a.frac_structure_pass + 1e-12);
        CHECK(a.success_rate <= a.frac_oracle_negative + 1e-12);
        for (double f : {a.recovery, a.hamming, a.mean_structure, a.frac_structure_one, a.success_rate,
                         a.frac_structure_pass, a.frac_oracle_negative}) {
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
        }
    }
}

TEST_CASE("success rate counts the conjunction")
{
    const auto& t = fixture().targets.front();
    EvalConfig cfg;
    std::vector<Sequence> designs{t.wild_type};
    // mutants of the wild type; score each directly
    for (std::size_t i = 0; i < t.wild_type.size(); ++i) {
        auto y = t.wild_type;
        y.tokens[i] = 1 - y.tokens[i];
        designs.push_back(y);
    }
    double expected = 0.0;
    for (const auto& y : designs) {
        const bool ok = lattice::structure_match(t, y) >= cfg.success_threshold &&
                        lattice::oracle_ddG(t, y, cfg.oracle_temperature) < 0.0;
        expected += ok ? 1.0 : 0.0;
    }
    expected /= static_cast<double>(designs.size());
    CHECK(design_metrics(zero_policy(11), t, designs, cfg).success_rate == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("evaluation is deterministic and refuses training targets")
{
    const auto& ds = fixture();
    const auto params = testing::small_params(11, 1, 0.5);
    EvalConfig cfg;
    cfg.seed = 3;
    const auto a = evaluate_checkpoint(params, ds, cfg, "c", &params, rl::Execution::parallel);
    const auto b = evaluate_checkpoint(params, ds, cfg, "c", &params, rl::Execution::serial);
    CHECK(a.to_json().dump() == b.to_json().dump());
    REQUIRE(a.kl_to_reference.has_value());
    CHECK(std::abs(*a.kl_to_reference) < 1e-12);
    cfg.seed = 4;
    const auto c = evaluate_checkpoint(params, ds, cfg, "c");
    CHECK(c.targets.size() == 1);
    CHECK_FALSE(c.kl_to_reference.has_value());

    const std::vector<std::string> leak{ds.select(Split::train).front()->id};
    try {
        evaluate_checkpoint(params, ds, leak, cfg, "c");
        FAIL("expected a leakage error");
    } catch (const pzero::Error& e) {
        CHECK(e.kind() == ErrorKind::leakage);
    }
}

TEST_CASE("report keys")
{
    const auto& ds = fixture();
    const auto r = evaluate_checkpoint(zero_policy(11), ds, EvalConfig{}, "iter_0000");
    const auto j = nlohmann::json::parse(r.to_json().dump());
    for (const char* k : {"format", "checkpoint_id", "seed", "samples_per_target", "success_threshold", "aggregate",
                          "targets", "kl_to_reference"}) {
        CHECK(j.contains(k));
    }
    for (const char* k : {"recovery_rate", "hamming_diversity", "mean_structure_match", "frac_structure_match_one",
                          "mean_fast_ddg", "mean_oracle_ddg", "success_rate"}) {
        CHECK(j["aggregate"].contains(k));
        CHECK(j["targets"][0]["metrics"].contains(k));
    }
    CHECK(j["checkpoint_id"] == "iter_0000");
}

TEST_CASE("eval config validation")
{
    EvalConfig cfg;
    cfg.samples_per_target = 1;
    CHECK_THROWS_AS(cfg.validate(), pzero::Error);
    cfg = {};
    cfg.success_threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), pzero::Error);
}

TEST_CASE("spearman against a direct rank computation")
{
    Rng rng(2);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> a(12), b(12);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = std::floor(rng.uniform() * 5);  // ties
            b[i] = rng.uniform() + 0.3 * a[i];
        }
        CHECK(spearman(a, b) == doctest::Approx(spearman_oracle(a, b)).epsilon(1e-12));
    }
    const std::vector<double> up{1, 2, 3, 4}, down{9, 7, 5, 1}, flat{2, 2, 2, 2};
    CHECK(spearman(up, down) == doctest::Approx(-1.0));
    CHECK(spearman(up, flat) == 0.0);
    CHECK_THROWS_AS(spearman(std::vector<double>{1.0}, std::vector<double>{1.0}), pzero::Error);
}

TEST_CASE("training curve: ordering, row count, finite rewards, no-div trend")
{
    auto cfg = default_config();
    cfg.dataset = {11, 3, 1, 2, 0};
    cfg.train.iterations = 20;
    cfg.train.ablation = rl::arm("no_div");
    cfg.propagate_seed();
    const auto& ds = fixture();
    rl::TrainerState state;
    state.policy = run::base_model(cfg, ds);
    state.reference = state.policy;
    std::vector<nlohmann::json> records;
    run::train_loop(state, cfg, ds, [&](const rl::IterationMetrics& m, const rl::TrainerState&) {
        records.push_back(m.to_json());
    });
    std::reverse(records.begin(), records.end());
    const auto curve = training_curve(records);
    REQUIRE(curve.size() == 20);
    std::vector<double> it, ham;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK(curve[i].iteration == static_cast<int>(i) + 1);
        CHECK(std::isfinite(curve[i].reward));
        it.push_back(curve[i].iteration);
        ham.push_back(curve[i].hamming);
    }
    const double rho = spearman(it, ham);
    MESSAGE("no-div hamming trend spearman = " << rho);
    CHECK(rho < 0.0);

    std::vector<nlohmann::json> broken{{{"iteration", 1}}};
    CHECK_THROWS_AS(training_curve(broken), pzero::Error);
}
