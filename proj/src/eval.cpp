#include "pzero/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pzero/diversity.hpp"
#include "pzero/error.hpp"
#include "pzero/reward.hpp"

namespace pzero::eval {

void EvalConfig::validate() const
{
    sampler.validate();
    require(samples_per_target >= 2, ErrorKind::config, "evaluation needs at least two samples per target");
    require(success_threshold >= 0.0 && success_threshold <= 1.0, ErrorKind::config,
            "success threshold must lie in [0, 1]");
    require(oracle_temperature > 0.0, ErrorKind::config, "oracle temperature must be positive");
}

nlohmann::json MetricSet::to_json() const
{
    return {{"recovery_rate", recovery},
            {"hamming_diversity", hamming},
            {"mean_structure_match", mean_structure},
            {"frac_structure_match_one", frac_structure_one},
            {"mean_fast_ddg", mean_fast_ddg},
            {"mean_oracle_ddg", mean_oracle_ddg},
            {"success_rate", success_rate},
            {"frac_structure_pass", frac_structure_pass},
            {"frac_oracle_negative", frac_oracle_negative},
            {"distinct", distinct}};
}

nlohmann::json EvalReport::to_json() const
{
    nlohmann::json j;
    j["format"] = "pzero-eval/1";
    j["checkpoint_id"] = checkpoint_id;
    j["seed"] = seed;
    j["samples_per_target"] = samples_per_target;
    j["success_threshold"] = success_threshold;
    j["aggregate"] = aggregate.to_json();
    auto per = nlohmann::json::array();
    for (const auto& t : targets) {
        per.push_back({{"id", t.id}, {"metrics", t.metrics.to_json()}});
    }
    j["targets"] = per;
    j["kl_to_reference"] = kl_to_reference ? nlohmann::json(*kl_to_reference) : nlohmann::json(nullptr);
    return j;
}

double recovery_rate(std::span<const Sequence> designs, const Sequence& wild_type)
{
    require(!designs.empty(), ErrorKind::usage, "no designs");
    double sum = 0.0;
    for (const auto& y : designs) {
        require(y.size() == wild_type.size(), ErrorKind::input, "design length does not match the wild type");
        std::size_t same = 0;
        for (std::size_t t = 0; t < y.size(); ++t) {
            same += y[t] == wild_type[t] ? 1 : 0;
        }
        sum += static_cast<double>(same) / static_cast<double>(y.size());
    }
    return sum / static_cast<double>(designs.size());
}

MetricSet design_metrics(const policy::PolicyParams& params, const lattice::BackboneTarget& target,
                         std::span<const Sequence> designs, const EvalConfig& cfg)
{
    require(designs.size() >= 2, ErrorKind::usage, "need at least two designs");
    MetricSet m;
    m.recovery = recovery_rate(designs, target.wild_type);
    m.hamming = diversity::hamming_diversity(designs);
    m.distinct = static_cast<double>(diversity::distinct_count(designs));
    const reward::FastDdg surrogate(params, target);
    const double n = static_cast<double>(designs.size());
    for (const auto& y : designs) {
        const double s = lattice::structure_match(target, y);
        const double ddg = lattice::oracle_ddG(target, y, cfg.oracle_temperature);
        m.mean_structure += s / n;
        m.frac_structure_one += (s == 1.0 ? 1.0 : 0.0) / n;
        m.mean_fast_ddg += surrogate(y) / n;
        m.mean_oracle_ddg += ddg / n;
        const bool pass = s >= cfg.success_threshold;
        const bool stable = ddg < 0.0;
        m.frac_structure_pass += (pass ? 1.0 : 0.0) / n;
        m.frac_oracle_negative += (stable ? 1.0 : 0.0) / n;
        m.success_rate += (pass && stable ? 1.0 : 0.0) / n;
    }
    return m;
}

namespace {

MetricSet mean_of(const std::vector<TargetReport>& rows)
{
    MetricSet a;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        a.recovery += m.recovery / n;
        a.hamming += m.hamming / n;
        a.mean_structure += m.mean_structure / n;
        a.frac_structure_one += m.frac_structure_one / n;
        a.mean_fast_ddg += m.mean_fast_ddg / n;
        a.mean_oracle_ddg += m.mean_oracle_ddg / n;
        a.success_rate += m.success_rate / n;
        a.frac_structure_pass += m.frac_structure_pass / n;
        a.frac_oracle_negative += m.frac_oracle_negative / n;
        a.distinct += m.distinct / n;
    }
    return a;
}

}  // namespace

EvalReport evaluate_checkpoint(const policy::PolicyParams& params, const Dataset& dataset,
                               std::span<const std::string> target_ids, const EvalConfig& cfg,
                               const std::string& checkpoint_id, const policy::PolicyParams* reference,
                               rl::Execution exec)
{
    cfg.validate();
    require(!target_ids.empty(), ErrorKind::usage, "no evaluation targets");
    std::vector<const lattice::BackboneTarget*> targets;
    std::vector<std::size_t> index;
    for (const auto& id : target_ids) {
        require(dataset.split_of(id) == Split::test, ErrorKind::leakage,
                "target " + id + " belongs to the training split; refusing to evaluate it");
        const auto& t = dataset.by_id(id);
        targets.push_back(&t);
        index.push_back(static_cast<std::size_t>(&t - dataset.targets.data()));
    }
    if (reference != nullptr) {
        params.check_compatible(*reference);
    }
    EvalReport report;
    report.checkpoint_id = checkpoint_id;
    report.seed = cfg.seed;
    report.samples_per_target = cfg.samples_per_target;
    report.success_threshold = cfg.success_threshold;
    report.targets.resize(targets.size());
    std::vector<double> kl(targets.size(), 0.0);
    std::vector<std::exception_ptr> errors(targets.size());
    const auto body = [&](std::size_t i) {
        try {
            Rng rng(derive_seed(cfg.seed, "eval", index[i]));
            const auto rollouts = policy::sample(params, *targets[i], cfg.samples_per_target, cfg.sampler, rng);
            std::vector<Sequence> designs;
            for (const auto& r : rollouts) {
                designs.push_back(r.sequence);
            }
            report.targets[i] = {targets[i]->id, design_metrics(params, *targets[i], designs, cfg)};
            if (reference != nullptr) {
                kl[i] = rl::kl_to_ref(params, *reference, policy::Condition::of(*targets[i]), designs).terms.kl;
            }
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (exec == rl::Execution::serial) {
        for (std::size_t i = 0; i < targets.size(); ++i) {
            body(i);
        }
    } else {
#pragma omp parallel for schedule(dynamic, 1)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(targets.size()); ++i) {
            body(static_cast<std::size_t>(i));
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    report.aggregate = mean_of(report.targets);
    if (reference != nullptr) {
        // every target has the same length, so the per-target means weigh equally
        report.kl_to_reference = std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(kl.size());
    }
    return report;
}

EvalReport evaluate_checkpoint(const policy::PolicyParams& params, const Dataset& dataset, const EvalConfig& cfg,
                               const std::string& checkpoint_id, const policy::PolicyParams* reference,
                               rl::Execution exec)
{
    std::vector<std::string> ids;
    for (const auto* t : dataset.select(Split::test)) {
        ids.push_back(t->id);
    }
    return evaluate_checkpoint(params, dataset, ids, cfg, checkpoint_id, reference, exec);
}

nlohmann::json CurveRow::to_json() const
{
    return {{"iteration", iteration}, {"reward", reward},   {"d_cos", d_cos},
            {"hamming", hamming},     {"kl", kl},           {"entropy_lb", entropy_lb}};
}

std::vector<CurveRow> training_curve(std::span<const nlohmann::json> metrics)
{
    std::vector<CurveRow> rows;
    for (const auto& m : metrics) {
        try {
            rows.push_back({m.at("iteration").get<int>(), m.at("mean_reward").get<double>(),
                            m.at("d_cos").get<double>(), m.at("hamming").get<double>(), m.at("kl").get<double>(),
                            m.at("entropy_lb").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::io, std::string("malformed metrics record: ") + e.what());
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.iteration < b.iteration; });
    return rows;
}

namespace {

std::vector<double> ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b)
{
    require(a.size() == b.size() && a.size() >= 2, ErrorKind::usage, "spearman needs two equal-length samples");
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace pzero::eval
