// Acceptance driver: one PASS/FAIL line per criterion, then a summary.
// Exit code 1 when any criterion fails. --quick skips the ablation sweep.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"
#include "pzero/config.hpp"
#include "pzero/diversity.hpp"
#include "pzero/error.hpp"
#include "pzero/eval.hpp"
#include "pzero/reward.hpp"
#include "pzero/rl.hpp"
#include "pzero/runner.hpp"
#include "pzero/theory.hpp"
#include "support.hpp"

using namespace pzero;
using policy::PolicyParams;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    std::string status;  // PASS, FAIL, SKIP
    std::string detail;
    nlohmann::json values = nlohmann::json::object();
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v)
{
    std::ostringstream s;
    s << v;
    return s.str();
}

Outcome verdict(bool ok, std::string detail, nlohmann::json values = nlohmann::json::object())
{
    return {ok ? "PASS" : "FAIL", std::move(detail), std::move(values)};
}

// ---- 1: gradient exactness ------------------------------------------------

std::vector<double> pooled(const PolicyParams& p, const policy::Condition& c, const Sequence& y,
                           policy::Tape* keep = nullptr)
{
    auto tape = policy::forward(p, c, y);
    std::vector<std::vector<double>> states(tape.hidden.begin() + 1, tape.hidden.end());
    const std::vector<double> mask(y.size(), 1.0);
    auto z = policy::pooled_embedding(states, mask);
    if (keep) {
        *keep = std::move(tape);
    }
    return z;
}

double dcos_value(const PolicyParams& p, const policy::Condition& c, const std::vector<Sequence>& ys)
{
    std::vector<diversity::Embedding> z;
    for (const auto& y : ys) {
        z.push_back(pooled(p, c, y));
    }
    return diversity::d_cos(z);
}

PolicyParams dcos_gradient(const PolicyParams& p, const policy::Condition& c, const std::vector<Sequence>& ys)
{
    std::vector<policy::Tape> tapes(ys.size());
    std::vector<diversity::Embedding> z;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        z.push_back(pooled(p, c, ys[i], &tapes[i]));
    }
    const auto dz = diversity::d_cos_grad(z);
    auto g = p.zeros_like();
    for (std::size_t i = 0; i < ys.size(); ++i) {
        std::vector<std::vector<double>> states(tapes[i].hidden.begin() + 1, tapes[i].hidden.end());
        const std::vector<double> mask(ys[i].size(), 1.0);
        auto adj = policy::Adjoints::zeros(tapes[i]);
        adj.token_state = policy::pooled_embedding_backward(states, mask, dz[i]);
        policy::backward(p, tapes[i], adj, g);
    }
    return g;
}

Outcome criterion1()
{
    const auto t0 = std::chrono::steady_clock::now();
    double ll = 0.0, kl = 0.0, dc = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(seed, "acceptance/fd"));
        const std::size_t L = 3 + seed % 4;
        const auto params = testing::small_params(L, derive_seed(seed, "theta"));
        const auto ref = testing::small_params(L, derive_seed(seed, "ref"));
        const auto& space = lattice::FoldSpace::get(static_cast<int>(L));
        const auto target = lattice::make_target("fd", space.walk(rng.next() % space.state_count()),
                                                 from_hydrophobic_mask(0, L));
        const auto cond = policy::Condition::of(target);
        std::vector<Sequence> ys;
        for (int i = 0; i < 3; ++i) {
            ys.push_back(from_hydrophobic_mask(static_cast<std::uint32_t>(rng.next()), L));
        }
        std::vector<const lattice::BackboneTarget*> conds(ys.size(), &target);
        conds[1] = nullptr;
        ll = std::max(ll, testing::worst_fd_error(params, rl::likelihood_loss(params, conds, ys).grad,
                                                  [&](const PolicyParams& p) {
                                                      return rl::likelihood_loss(p, conds, ys).terms.total;
                                                  }));
        kl = std::max(kl, testing::worst_fd_error(params, rl::kl_to_ref(params, ref, cond, ys).grad,
                                                  [&](const PolicyParams& p) {
                                                      return rl::kl_to_ref(p, ref, cond, ys).terms.total;
                                                  }));
        dc = std::max(dc, testing::worst_fd_error(params, dcos_gradient(params, cond, ys),
                                                  [&](const PolicyParams& p) { return dcos_value(p, cond, ys); }));
    }
    const double secs = seconds_since(t0);
    return verdict(ll < 1e-4 && kl < 1e-4 && dc < 1e-4 && secs < 60.0,
                   "worst rel err loglik " + fmt(ll) + ", kl " + fmt(kl) + ", d_cos " + fmt(dc) + " in " + fmt(secs) +
                       " s",
                   {{"loglik", ll}, {"kl", kl}, {"d_cos", dc}, {"seconds", secs}});
}

// ---- 2: normalization -----------------------------------------------------

Outcome criterion2()
{
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(seed, "acceptance/norm"));
        for (std::size_t L = 1; L <= 4; ++L) {
            const auto params = testing::small_params(L, seed, 1.5);
            auto cond = policy::Condition::masked_condition();
            if (L >= 3) {
                const auto& space = lattice::FoldSpace::get(static_cast<int>(L));
                cond = policy::Condition::of(
                    lattice::make_target("n", space.walk(rng.next() % space.state_count()), from_hydrophobic_mask(0, L)));
            }
            double s = 0.0;
            for (std::uint32_t m = 0; m < (1u << L); ++m) {
                s += std::exp(policy::log_prob(params, cond, from_hydrophobic_mask(m, L)).total);
            }
            worst = std::max(worst, std::abs(s - 1.0));
            for (const policy::Sampler smp : {policy::Sampler{0.8, 0.9}, policy::Sampler{0.3, 0.5}}) {
                const auto e = policy::enumerate_sequences(params, cond, L, smp);
                worst = std::max(worst, std::abs(std::accumulate(e.probability.begin(), e.probability.end(), 0.0) - 1.0));
            }
        }
    }
    return verdict(worst <= 1e-9, "max |sum - 1| = " + fmt(worst) + " over L = 1..4, 20 seeds", {{"max_dev", worst}});
}

// ---- 3: fast-ddG identities -----------------------------------------------

Outcome criterion3()
{
    const auto& ds = testing::cached_dataset(11, 3, 1, 2);
    bool wt_zero = true, flat_zero = true;
    Rng rng(3);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto params = testing::small_params(11, seed, 1.0);
        auto flat = params;
        std::fill(flat.condition_projection.data.begin(), flat.condition_projection.data.end(), 0.0);
        for (const auto& t : ds.targets) {
            wt_zero = wt_zero && reward::fast_ddg(params, t, t.wild_type) == 0.0;
            for (int k = 0; k < 20; ++k) {
                const auto y = from_hydrophobic_mask(static_cast<std::uint32_t>(rng.next()), 11);
                flat_zero = flat_zero && reward::fast_ddg(flat, t, y) == 0.0;
            }
        }
    }
    const bool kt = reward::thermal_energy == 0.593;
    return verdict(wt_zero && flat_zero && kt,
                   std::string("wild type ") + (wt_zero ? "0" : "nonzero") + ", zeroed conditioning " +
                       (flat_zero ? "0" : "nonzero") + ", kT = " + fmt(reward::thermal_energy));
}

// ---- 4: lemma and estimator identities ------------------------------------

Outcome criterion4()
{
    double lemma = 0.0;
    Rng rng(4);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto ens = theory::random_ensemble(1 + s % 8, s);
        for (int k = 0; k < 20; ++k) {
            std::vector<double> p(ens.size());
            for (auto& v : p) {
                v = 1e-3 + rng.uniform();
            }
            const double sum = std::accumulate(p.begin(), p.end(), 0.0);
            for (auto& v : p) {
                v /= sum;
            }
            const auto o = theory::objective_J(p, ens, 0.1, 0.05);
            lemma = std::max(lemma, std::abs(o.pair_direct - o.pair_mean_norm));
        }
    }
    double est = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t m = 2 + rng.below(14), dim = 1 + rng.below(10);
        std::vector<diversity::Embedding> z(m);
        for (auto& v : z) {
            v.resize(dim);
            double n = 0.0;
            for (auto& x : v) {
                x = rng.normal();
                n += x * x;
            }
            for (auto& x : v) {
                x /= std::sqrt(n);
            }
        }
        double pairs = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                pairs += std::inner_product(z[i].begin(), z[i].end(), z[j].begin(), 0.0);
            }
        }
        const double brute = 1.0 - pairs / (static_cast<double>(m * (m - 1)) / 2.0);
        est = std::max({est, std::abs(diversity::d_cos(z) - brute),
                        std::abs(diversity::d_cos_offdiag_estimate(z).diversity - brute)});
    }
    return verdict(lemma < 1e-12 && est < 1e-12,
                   "E[c] vs |E psi|^2 max diff " + fmt(lemma) + ", all-pairs vs estimator max diff " + fmt(est),
                   {{"lemma", lemma}, {"estimator", est}});
}

// ---- 5: entropy bound -----------------------------------------------------

Outcome criterion5()
{
    theory::TheoryConfig tc;
    tc.random_trials = 1000;
    bool random_ok = false;
    double min_margin = 0.0, max_bound = 0.0;
    for (const auto& c : theory::run_suite(tc)) {
        if (c.name == "entropy_bound_random_ensembles") {
            random_ok = c.pass;
            min_margin = c.values["min_margin"];
            max_bound = c.values["max_bound"];
        }
    }
    // every logged batch of short training runs at L = 4, exact entropies
    const auto bend = testing::target_from("HPPH", testing::u_bend(), "bend");
    const lattice::BackboneTarget* targets[] = {&bend};
    double batch_margin = INFINITY, batch_bound = 0.0;
    int batches = 0;
    for (auto algo : {rl::Algorithm::grpo, rl::Algorithm::raft, rl::Algorithm::dpo, rl::Algorithm::multi_dpo}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            rl::TrainConfig cfg;
            cfg.algorithm = algo;
            cfg.learning_rate = 0.5;
            cfg.gate_threshold = 0.0;
            cfg.seed = seed;
            auto p = testing::small_params(4, 40 + seed, 1.0);
            rl::TrainerState st{p, p, 0};
            for (int i = 0; i < 10; ++i) {
                const auto m = rl::run_iteration(st, targets, cfg);
                batch_margin = std::min(batch_margin, m.exact_entropy_margin.value_or(-INFINITY));
                batch_bound = std::max(batch_bound, m.entropy_lb);
                ++batches;
            }
        }
    }
    const bool ok = random_ok && min_margin >= -1e-12 && max_bound <= std::log(2.0) + 1e-12 &&
                    batch_margin >= -1e-12 && batch_bound <= std::log(2.0) + 1e-12;
    return verdict(ok,
                   "1000 ensembles min margin " + fmt(min_margin) + "; " + std::to_string(batches) +
                       " training batches min margin " + fmt(batch_margin) + "; max bound " +
                       fmt(std::max(max_bound, batch_bound)) + " (log 2 = " + fmt(std::log(2.0)) + ")",
                   {{"ensemble_min_margin", min_margin}, {"batch_min_margin", batch_margin}, {"batches", batches}});
}

// ---- 6: fixed point and barrier --------------------------------------------

Outcome criterion6()
{
    const auto t0 = std::chrono::steady_clock::now();
    theory::TheoryConfig tc;  // L = 8, |Y| = 256
    const auto ens = theory::random_ensemble(tc.length, tc.seed);
    const auto fp = theory::solve_fixed_point(ens, tc.alpha_kl, tc.alpha_div, tc.damping);
    const auto kl_only = theory::solve_fixed_point(ens, tc.alpha_kl, 0.0, tc.damping);
    const auto star = theory::boltzmann(ens, tc.alpha_kl);
    double boltz = 0.0;
    for (std::size_t y = 0; y < ens.size(); ++y) {
        boltz = std::max(boltz, std::abs(kl_only.p[y] - star[y]));
    }
    const auto probe = theory::barrier_probe(ens, 0, ens.size() - 1, tc.alpha_kl, tc.alpha_div);
    const double slope_err = std::abs(probe.slope - tc.alpha_kl) / tc.alpha_kl;
    const double secs = seconds_since(t0);
    const bool ok = fp.residual < 1e-10 && fp.stationarity < 1e-8 && boltz < 1e-10 && slope_err < 0.05 &&
                    probe.increasing && secs < 60.0;
    return verdict(ok,
                   "residual " + fmt(fp.residual) + ", stationarity " + fmt(fp.stationarity) + ", Boltzmann diff " +
                       fmt(boltz) + ", barrier slope " + fmt(probe.slope) + " (rel err " + fmt(slope_err) + "), " +
                       fmt(secs) + " s at |Y| = " + std::to_string(ens.size()),
                   {{"residual", fp.residual},
                    {"stationarity", fp.stationarity},
                    {"boltzmann_diff", boltz},
                    {"slope", probe.slope},
                    {"seconds", secs}});
}

// ---- 7: algorithm contracts ------------------------------------------------

Outcome criterion7()
{
    const auto& ds = testing::cached_dataset(11, 3, 2);
    auto groups_for = [&](const PolicyParams& p, const rl::TrainConfig& cfg, std::uint64_t seed) {
        std::vector<rl::CandidateGroup> out;
        Rng rng(seed);
        for (std::size_t i = 0; i < ds.targets.size(); ++i) {
            out.push_back(rl::make_group(p, ds.targets[i], i, cfg, rng));
        }
        return out;
    };
    std::vector<std::string> broken;

    // zero-advantage no-op
    {
        auto params = testing::small_params(11, 5);
        rl::TrainConfig cfg;
        cfg.ablation.no_kl = true;
        cfg.ablation.no_div = true;
        cfg.learning_rate = 1.0;
        auto gs = groups_for(params, cfg, 10);
        for (auto& g : gs) {
            g.gated = true;
            std::fill(g.advantages.begin(), g.advantages.end(), 0.0);
        }
        const auto before = params;
        rl::grpo_step(params, before, gs, cfg);
        if (!(params == before)) {
            broken.push_back("zero-advantage no-op");
        }
    }
    // clip arithmetic
    {
        const bool ok = std::abs(rl::clipped_surrogate(1.5, 2.0, 0.1) - 2.2) < 1e-15 &&
                        std::abs(rl::clipped_surrogate(1.5, -2.0, 0.1) + 3.0) < 1e-15 &&
                        std::abs(rl::clipped_surrogate(0.5, 2.0, 0.1) - 1.0) < 1e-15 &&
                        std::abs(rl::clipped_surrogate(0.5, -2.0, 0.1) + 1.8) < 1e-15 &&
                        std::abs(rl::clipped_surrogate(1.05, 1.0, 0.1) - 1.05) < 1e-15;
        if (!ok) {
            broken.push_back("clip arithmetic");
        }
    }
    // RAFT strict argmax: first index of the maximum, ties flagged
    {
        const auto params = testing::small_params(11, 21);
        rl::TrainConfig cfg;
        auto gs = groups_for(params, cfg, 22);
        bool ok = true;
        for (const auto& g : gs) {
            const auto c = g.composites();
            const auto b = rl::best_index(g);
            ok = ok && c[b] == *std::max_element(c.begin(), c.end());
            for (std::size_t i = 0; i < b; ++i) {
                ok = ok && c[i] < c[b];
            }
        }
        auto tied = gs[0];
        for (auto& r : tied.rewards) {
            r.composite = 0.5;
        }
        bool tie = false;
        ok = ok && rl::best_index(tied, &tie) == 0 && tie;
        if (!ok) {
            broken.push_back("RAFT argmax");
        }
    }
    // gate soundness: closed groups contribute nothing
    {
        const auto params = testing::small_params(11, 7);
        const auto ref = testing::small_params(11, 8);
        rl::TrainConfig cfg;
        auto gs = groups_for(params, cfg, 12);
        bool ok = true;
        for (const auto& g : gs) {
            ok = ok && g.gated == (g.gate_pass_fraction >= cfg.gate_fraction);
        }
        for (auto& g : gs) {
            g.gated = true;
        }
        auto with_closed = gs;
        with_closed[1].gated = false;
        std::vector<rl::CandidateGroup> only_open;
        for (std::size_t i = 0; i < gs.size(); ++i) {
            if (i != 1) {
                only_open.push_back(gs[i]);
            }
        }
        const auto k = rl::effective_coefficients(cfg);
        ok = ok && rl::grpo_loss(params, ref, with_closed, k).grad == rl::grpo_loss(params, ref, only_open, k).grad;
        if (!ok) {
            broken.push_back("gate soundness");
        }
    }
    // additivity
    double worst = 0.0;
    {
        const auto params = testing::small_params(11, 13, 0.8);
        const auto ref = testing::small_params(11, 14, 0.8);
        rl::TrainConfig cfg;
        for (std::uint64_t s = 0; s < 5; ++s) {
            auto gs = groups_for(params, cfg, 100 + s);
            for (auto& g : gs) {
                g.gated = true;
            }
            const auto k = rl::effective_coefficients(cfg);
            for (const auto& t : {rl::grpo_loss(params, ref, gs, k).terms, rl::raft_loss(params, ref, gs, k).terms,
                                  rl::dpo_loss(params, ref, rl::preference_pairs(gs), k, true).terms}) {
                worst = std::max(worst, std::abs(t.total - t.recomposed()));
            }
        }
        if (worst >= 1e-9) {
            broken.push_back("additivity");
        }
    }
    std::string detail = broken.empty() ? "no-op, clip, argmax, gate, additivity (max " + fmt(worst) + ")"
                                        : "broken:";
    for (const auto& b : broken) {
        detail += " " + b;
    }
    return verdict(broken.empty(), detail);
}

// ---- 8: ablation directions -------------------------------------------------

double metric(const nlohmann::json& table, const std::string& arm, std::uint64_t seed, const std::string& key)
{
    for (const auto& r : table["runs"]) {
        if (r["arm"] == arm && r["seed"] == seed) {
            return r["metrics"][key].get<double>();
        }
    }
    fail(ErrorKind::usage, "missing ablation row " + arm);
}

double arm_mean(const nlohmann::json& table, const std::string& arm, const std::string& key)
{
    return table["mean"][arm][key].get<double>();
}

bool between(double x, double a, double b) { return std::min(a, b) <= x && x <= std::max(a, b); }

Outcome criterion8(const RunConfig& base, const fs::path& dir, bool quick)
{
    if (quick) {
        return {"SKIP", "ablation sweep skipped in quick mode"};
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = base;
    cfg.ablate = AblateConfig{};
    std::ostringstream log;
    fs::remove_all(dir);
    const auto table = run::ablate(cfg, dir, log);
    const double minutes = seconds_since(t0) / 60.0;
    const auto& seeds = cfg.ablate.seeds;

    int a = 0, b_kl = 0, d_div = 0, d_ham = 0;
    for (auto s : seeds) {
        a += metric(table, "full", s, "hamming_diversity") > metric(table, "no_div", s, "hamming_diversity");
        b_kl += metric(table, "no_kl", s, "kl_to_reference") > metric(table, "full", s, "kl_to_reference");
        d_div += metric(table, "diversity_reward", s, "success_rate") < metric(table, "full", s, "success_rate");
        d_ham += metric(table, "hamming_reward", s, "success_rate") < metric(table, "full", s, "success_rate");
    }
    const bool pa = a >= 4;
    const bool pb = b_kl >= 4 && arm_mean(table, "no_kl", "success_rate") <= arm_mean(table, "full", "success_rate");
    const double s_full = arm_mean(table, "full", "mean_structure_match");
    const double s_tm = arm_mean(table, "tm_only", "mean_structure_match");
    const double s_ddg = arm_mean(table, "ddg_only", "mean_structure_match");
    const double o_full = arm_mean(table, "full", "mean_oracle_ddg");
    const double o_tm = arm_mean(table, "tm_only", "mean_oracle_ddg");
    const double o_ddg = arm_mean(table, "ddg_only", "mean_oracle_ddg");
    const bool pc = between(s_full, s_tm, s_ddg) && between(o_full, o_ddg, o_tm);
    const bool pd = d_div >= 4 && d_ham >= 4;

    std::ostringstream d;
    d << "(a) " << (pa ? "pass" : "FAIL") << " full>no_div hamming on " << a << "/5";
    d << "; (b) " << (pb ? "pass" : "FAIL") << " no_kl KL higher on " << b_kl << "/5, success no_kl "
      << arm_mean(table, "no_kl", "success_rate") << " vs full " << arm_mean(table, "full", "success_rate");
    d << "; (c) " << (pc ? "pass" : "FAIL") << " structure tm/full/ddg " << s_tm << "/" << s_full << "/" << s_ddg
      << ", oracle ddG tm/full/ddg " << o_tm << "/" << o_full << "/" << o_ddg;
    d << "; (d) " << (pd ? "pass" : "FAIL") << " success below full: diversity_reward " << d_div
      << "/5, hamming_reward " << d_ham << "/5";
    d << "; " << minutes << " min";
    return verdict(pa && pb && pc && pd && minutes < 30.0, d.str(),
                   {{"a", pa}, {"b", pb}, {"c", pc}, {"d", pd}, {"minutes", minutes}, {"table", dir.string()}});
}

// ---- 9: surrogate sanity ---------------------------------------------------

Outcome criterion9(const RunConfig& base)
{
    auto cfg = base;
    cfg.dataset = {12, 9, 5, 1, 0};
    cfg.train.ablation = {};
    const auto dataset = run::obtain_dataset(cfg);
    const auto tests = dataset.select(Split::test);
    // fixed 50-mutant suite: single-site flips of the test wild types
    std::vector<std::pair<const lattice::BackboneTarget*, Sequence>> suite;
    for (const auto* t : tests) {
        for (std::size_t i = 0; i < t->wild_type.size(); ++i) {
            auto y = t->wild_type;
            y.tokens[i] = 1 - y.tokens[i];
            suite.emplace_back(t, y);
        }
    }
    Rng pick(derive_seed(cfg.dataset.seed, "acceptance/mutants"));
    for (std::size_t i = suite.size() - 1; i > 0; --i) {
        std::swap(suite[i], suite[pick.below(i + 1)]);
    }
    suite.resize(std::min<std::size_t>(50, suite.size()));

    std::vector<double> rhos;
    bool ok = suite.size() == 50;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        cfg.seed = seed;
        cfg.propagate_seed();
        rl::TrainerState st;
        st.policy = run::base_model(cfg, dataset);
        st.reference = st.policy;
        run::train_loop(st, cfg, dataset);
        std::vector<double> fast, oracle;
        for (const auto& [t, y] : suite) {
            fast.push_back(reward::fast_ddg(st.policy, *t, y));
            oracle.push_back(lattice::oracle_ddG(*t, y));
        }
        rhos.push_back(eval::spearman(fast, oracle));
        ok = ok && rhos.back() > 0.0;
    }
    std::string d = "Spearman(fast_ddg, oracle_ddG) over " + std::to_string(suite.size()) + " test mutants, per seed:";
    for (double r : rhos) {
        d += " " + fmt(r);
    }
    return verdict(ok, d, {{"rho", rhos}});
}

// ---- 10: reproducibility ---------------------------------------------------

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion10(const RunConfig& base, const fs::path& dir)
{
    auto small = [&](int iterations) {
        auto c = base;
        c.dataset = {12, 9, 5, 1, 0};
        c.train.iterations = iterations;
        c.propagate_seed();
        return c;
    };
    fs::remove_all(dir);
    std::ostringstream log;
    const auto whole = dir / "whole", split = dir / "split", again = dir / "again";
    run::train(small(6), whole, false, log);
    run::train(small(3), split, false, log);
    run::train(small(6), split, true, log);
    run::train(small(6), again, false, log);
    bool resume_ok = slurp(whole / "metrics.jsonl") == slurp(split / "metrics.jsonl") &&
                     !slurp(whole / "metrics.jsonl").empty();
    bool hash_ok = true;
    for (int i = 0; i <= 6; ++i) {
        const auto a = run::hash_hex(slurp(run::checkpoint_path(whole, i)));
        resume_ok = resume_ok && a == run::hash_hex(slurp(run::checkpoint_path(split, i)));
        hash_ok = hash_ok && a == run::hash_hex(slurp(run::checkpoint_path(again, i)));
    }
    run::make_dataset(small(1), dir / "ds1", log);
    run::make_dataset(small(1), dir / "ds2", log);
    const auto text = slurp(dir / "ds1" / "dataset.json");
    hash_ok = hash_ok && text == slurp(dir / "ds2" / "dataset.json") &&
              run::read_json(dir / "ds1" / "dataset_manifest.json").at("hash") == run::hash_hex(text) &&
              run::read_json(whole / "manifest.json").at("dataset_hash") == run::hash_hex(slurp(whole / "dataset.json"));
    // corrupt checkpoint must be refused
    bool refused = false;
    std::ofstream(run::checkpoint_path(split, 6), std::ios::trunc) << "{\"format\":";
    try {
        run::train(small(7), split, true, log);
    } catch (const pzero::Error& e) {
        refused = e.kind() == ErrorKind::io;
    }
    fs::remove_all(dir);
    return verdict(resume_ok && hash_ok && refused,
                   std::string("resume 3+3 vs 6 ") + (resume_ok ? "identical" : "DIFFERS") + ", checkpoint/dataset hashes " +
                       (hash_ok ? "reproduced" : "DIFFER") + ", corrupt checkpoint " +
                       (refused ? "refused" : "ACCEPTED"));
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks"};
    bool quick = false;
    std::string out_dir;
    std::string report_path;
    std::string config_path;
    app.add_flag("--quick", quick, "skip the ablation sweep");
    app.add_option("--out-dir", out_dir, "where the ablation table is kept (default: a temporary directory)");
    app.add_option("--report", report_path, "write the results as JSON");
    app.add_option("--config", config_path, "config overlay (dataset, policy, training)")->check(CLI::ExistingFile);
    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = config_path.empty() ? default_config() : load_config(config_path);
        const fs::path root = out_dir.empty()
                                  ? fs::temp_directory_path() / ("pzero_acceptance_" + std::to_string(::getpid()))
                                  : fs::path(out_dir);
        fs::create_directories(root);

        const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
            {"1 gradient exactness", criterion1},
            {"2 probability normalization", criterion2},
            {"3 fast-ddG identities", criterion3},
            {"4 lemma and estimator identities", criterion4},
            {"5 entropy bound", criterion5},
            {"6 fixed point and KL barrier", criterion6},
            {"7 algorithm contracts", criterion7},
            {"8 ablation directions", [&] { return criterion8(cfg, root / "ablation", quick); }},
            {"9 surrogate rank correlation", [&] { return criterion9(cfg); }},
            {"10 reproducibility", [&] { return criterion10(cfg, root / "repro"); }},
        };
        nlohmann::json results = nlohmann::json::array();
        int failed = 0, passed = 0, skipped = 0;
        for (const auto& [name, run] : criteria) {
            Outcome o;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                o = run();
            } catch (const std::exception& e) {
                o = {"FAIL", std::string("error: ") + e.what()};
            }
            std::cout << o.status << "  " << name << ": " << o.detail << std::endl;
            failed += o.status == "FAIL";
            passed += o.status == "PASS";
            skipped += o.status == "SKIP";
            results.push_back({{"criterion", name},
                               {"status", o.status},
                               {"detail", o.detail},
                               {"values", o.values},
                               {"seconds", seconds_since(t0)}});
        }
        std::cout << "acceptance summary: " << passed << " passed, " << failed << " failed, " << skipped
                  << " skipped" << std::endl;
        if (!report_path.empty()) {
            run::write_json(report_path, {{"format", "pzero-acceptance/1"}, {"quick", quick}, {"results", results}});
        }
        if (out_dir.empty()) {
            fs::remove_all(root);
        }
        return failed == 0 ? 0 : 1;
    } catch (const pzero::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    }
}
