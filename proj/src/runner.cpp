#include "pzero/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pzero/error.hpp"
#include "pzero/rng.hpp"
#include "pzero/theory.hpp"

namespace pzero::run {

namespace {

constexpr const char* checkpoint_format = "pzero-train-checkpoint/1";
constexpr const char* run_format = "pzero-run/1";

bool empty_or_missing(const fs::path& dir)
{
    return !fs::exists(dir) || (fs::is_directory(dir) && fs::is_empty(dir));
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorKind::io, "cannot create directory " + dir.string());
}

void append_line(const fs::path& path, const std::string& line)
{
    std::ofstream out(path, std::ios::app);
    out << line << '\n';
    out.flush();
    require(out.good(), ErrorKind::io, "cannot append to " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path)
{
    std::vector<std::string> lines;
    if (!fs::exists(path)) {
        return lines;
    }
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot read " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

nlohmann::json curve_line(const nlohmann::json& metrics)
{
    return eval::training_curve(std::span<const nlohmann::json>(&metrics, 1)).front().to_json();
}

nlohmann::json checkpoint_json(int iteration, const policy::PolicyParams& p, const nlohmann::json& metrics)
{
    return {{"format", checkpoint_format}, {"iteration", iteration}, {"policy", policy::to_json(p)},
            {"metrics", metrics}};
}

// Snapshot comparison ignores the iteration budget, which a resume may raise.
nlohmann::json comparable(nlohmann::json cfg)
{
    cfg["train"].erase("iterations");
    return cfg;
}

Dataset load_dataset_file(const fs::path& path)
{
    try {
        return dataset_from_json(read_json(path));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, "malformed dataset " + path.string() + ": " + e.what());
    }
}

policy::PolicyParams load_params(const fs::path& path)
{
    try {
        return policy::params_from_json(read_json(path));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, "malformed parameters in " + path.string() + ": " + e.what());
    }
}

}  // namespace

std::string hash_hex(const std::string& text)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
    return buf;
}

nlohmann::json read_json(const fs::path& path)
{
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot read " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, "corrupt JSON in " + path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << text;
        out.flush();
        require(out.good(), ErrorKind::io, "cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    require(!ec, ErrorKind::io, "cannot rename " + tmp.string() + " to " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
    write_text(path, j.dump(1) + "\n");
}

Dataset obtain_dataset(const RunConfig& cfg)
{
    if (!cfg.dataset_path.empty()) {
        auto d = load_dataset_file(cfg.dataset_path);
        require(d.length == cfg.dataset.length, ErrorKind::config,
                "dataset file has length " + std::to_string(d.length) + ", config says " +
                    std::to_string(cfg.dataset.length));
        return d;
    }
    return build_dataset(cfg.dataset);
}

policy::PolicyParams base_model(const RunConfig& cfg, const Dataset& dataset)
{
    policy::Dimensions dims;
    dims.embedding = cfg.policy.embedding;
    dims.context = cfg.policy.context;
    dims.hidden = cfg.policy.hidden;
    dims.features = policy::feature_count(static_cast<std::size_t>(dataset.length));
    auto params = policy::PolicyParams::random(Alphabet(), dims, derive_seed(cfg.seed, "init"), cfg.policy.init_scale);
    if (cfg.pretrain.steps > 0) {
        const auto train = dataset.select(Split::train);
        rl::pretrain(params, train, cfg.pretrain, cfg.execution);
    }
    return params;
}

void train_loop(rl::TrainerState& state, const RunConfig& cfg, const Dataset& dataset, const IterationHook& hook)
{
    const auto targets = dataset.select(Split::train);
    while (state.iteration < cfg.train.iterations) {
        const auto m = rl::run_iteration(state, targets, cfg.train, cfg.execution);
        if (hook) {
            hook(m, state);
        }
    }
}

void make_dataset(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log)
{
    ensure_dir(out_dir);
    const auto d = obtain_dataset(cfg);
    const auto text = serialize(d);
    write_text(out_dir / "dataset.json", text);
    write_json(out_dir / "dataset_manifest.json",
               {{"format", "pzero-dataset-manifest/1"},
                {"hash", hash_hex(text)},
                {"length", d.length},
                {"seed", d.seed},
                {"n_train", d.select(Split::train).size()},
                {"n_test", d.select(Split::test).size()}});
    log << "dataset L=" << d.length << " train=" << d.select(Split::train).size()
        << " test=" << d.select(Split::test).size() << " hash=" << hash_hex(text) << '\n';
}

fs::path checkpoint_path(const fs::path& run_dir, int iteration)
{
    std::ostringstream name;
    name << "iter_" << std::setw(4) << std::setfill('0') << iteration << ".json";
    return run_dir / "checkpoints" / name.str();
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir)
{
    const auto dir = run_dir / "checkpoints";
    if (!fs::is_directory(dir)) {
        return std::nullopt;
    }
    std::optional<fs::path> best;
    int best_it = -1;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.size() != 14 || name.rfind("iter_", 0) != 0 || entry.path().extension() != ".json") {
            continue;
        }
        try {
            const int it = std::stoi(name.substr(5, 4));
            if (it > best_it) {
                best_it = it;
                best = entry.path();
            }
        } catch (const std::exception&) {
        }
    }
    return best;
}

Checkpoint load_checkpoint(const fs::path& path)
{
    const auto j = read_json(path);
    try {
        require(j.at("format") == checkpoint_format, ErrorKind::io, "not a training checkpoint: " + path.string());
        Checkpoint c;
        c.iteration = j.at("iteration").get<int>();
        c.policy = policy::params_from_json(j.at("policy"));
        c.metrics = j.at("metrics");
        require(c.iteration >= 0, ErrorKind::io, "negative iteration in " + path.string());
        require(c.policy.all_finite(), ErrorKind::io, "non-finite parameters in " + path.string());
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, "corrupt checkpoint " + path.string() + ": " + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::io) {
            throw;
        }
        fail(ErrorKind::io, "corrupt checkpoint " + path.string() + ": " + e.what());
    }
}

void train(const RunConfig& cfg, const fs::path& out_dir, bool resume, std::ostream& log)
{
    cfg.validate();
    const auto cfg_json = to_json(cfg);
    Dataset dataset;
    rl::TrainerState state;

    if (!resume) {
        require(empty_or_missing(out_dir), ErrorKind::usage,
                "run directory " + out_dir.string() + " is not empty (use --resume to continue it)");
        ensure_dir(out_dir / "checkpoints");
        dataset = obtain_dataset(cfg);
        const auto dataset_text = serialize(dataset);
        write_text(out_dir / "dataset.json", dataset_text);
        write_json(out_dir / "config.json", cfg_json);
        state.policy = base_model(cfg, dataset);
        state.reference = state.policy;
        const auto ref_json = policy::to_json(state.reference);
        write_json(out_dir / "reference.json", ref_json);
        write_json(out_dir / "manifest.json", {{"format", run_format},
                                               {"dataset_hash", hash_hex(dataset_text)},
                                               {"reference_hash", hash_hex(ref_json.dump())},
                                               {"config_hash", hash_hex(comparable(cfg_json).dump())}});
        write_json(checkpoint_path(out_dir, 0), checkpoint_json(0, state.policy, nullptr));
        log << "base model ready (" << dataset.select(Split::train).size() << " training targets)\n";
    } else {
        require(fs::exists(out_dir / "config.json"), ErrorKind::usage,
                "nothing to resume in " + out_dir.string());
        const auto snapshot = read_json(out_dir / "config.json");
        if (comparable(snapshot) != comparable(cfg_json)) {
            fail(ErrorKind::config, "config differs from the run's snapshot (only train.iterations may change)\n"
                                    "snapshot: " + comparable(snapshot).dump() + "\nnow:      " +
                                        comparable(cfg_json).dump());
        }
        const auto manifest = read_json(out_dir / "manifest.json");
        dataset = load_dataset_file(out_dir / "dataset.json");
        require(hash_hex(serialize(dataset)) == manifest.value("dataset_hash", ""), ErrorKind::io,
                "dataset.json does not match the manifest hash");
        state.reference = load_params(out_dir / "reference.json");
        require(hash_hex(policy::to_json(state.reference).dump()) == manifest.value("reference_hash", ""),
                ErrorKind::io, "reference.json does not match the manifest hash");

        const auto latest = latest_checkpoint(out_dir);
        require(latest.has_value(), ErrorKind::io, "no checkpoint in " + out_dir.string());
        auto ck = load_checkpoint(*latest);
        state.reference.check_compatible(ck.policy);
        require(ck.iteration <= cfg.train.iterations, ErrorKind::config,
                "run already has " + std::to_string(ck.iteration) + " iterations, more than the requested " +
                    std::to_string(cfg.train.iterations));
        state.policy = std::move(ck.policy);
        state.iteration = ck.iteration;

        // The checkpoint is written before its metrics line, so a crash in
        // between leaves exactly one line missing.
        const auto lines = read_lines(out_dir / "metrics.jsonl");
        const auto n = static_cast<int>(lines.size());
        if (n == ck.iteration - 1 && !ck.metrics.is_null()) {
            append_line(out_dir / "metrics.jsonl", ck.metrics.dump());
            append_line(out_dir / "curve.jsonl", curve_line(ck.metrics).dump());
        } else {
            require(n == ck.iteration, ErrorKind::io,
                    "metrics.jsonl has " + std::to_string(n) + " records but the latest checkpoint is iteration " +
                        std::to_string(ck.iteration));
        }
        write_json(out_dir / "config.json", cfg_json);
        log << "resuming at iteration " << state.iteration << '\n';
    }

    train_loop(state, cfg, dataset, [&](const rl::IterationMetrics& m, const rl::TrainerState& s) {
        const auto mj = m.to_json();
        write_json(checkpoint_path(out_dir, s.iteration), checkpoint_json(s.iteration, s.policy, mj));
        append_line(out_dir / "metrics.jsonl", mj.dump());
        append_line(out_dir / "curve.jsonl", curve_line(mj).dump());
        log << "iter " << m.iteration << " reward=" << m.mean_reward << " kl=" << m.kl << " d_cos=" << m.d_cos
            << " hamming=" << m.hamming << (m.skipped ? " (skipped)" : "") << '\n';
    });
}

eval::EvalReport evaluate(const RunConfig& cfg, const EvalRequest& req, const fs::path& out_dir, std::ostream& log)
{
    cfg.validate();
    const auto dataset_file = req.run_dir / "dataset.json";
    const Dataset dataset = fs::exists(dataset_file) ? load_dataset_file(dataset_file) : obtain_dataset(cfg);

    fs::path ck_path;
    if (req.checkpoint) {
        ck_path = *req.checkpoint;
    } else {
        const auto latest = latest_checkpoint(req.run_dir);
        require(latest.has_value(), ErrorKind::io, "no checkpoint in " + req.run_dir.string());
        ck_path = *latest;
    }
    const auto ck = load_checkpoint(ck_path);

    std::optional<policy::PolicyParams> reference;
    const auto ref_path = req.reference ? *req.reference : req.run_dir / "reference.json";
    if (req.reference || fs::exists(ref_path)) {
        reference = load_params(ref_path);
        reference->check_compatible(ck.policy);
    }

    const auto id = ck_path.stem().string();
    const auto ref_ptr = reference ? &*reference : nullptr;
    auto report = req.target_ids.empty()
                      ? eval::evaluate_checkpoint(ck.policy, dataset, cfg.eval, id, ref_ptr, cfg.execution)
                      : eval::evaluate_checkpoint(ck.policy, dataset, req.target_ids, cfg.eval, id, ref_ptr,
                                                  cfg.execution);
    ensure_dir(out_dir);
    write_json(out_dir / "report.json", report.to_json());
    const auto& g = report.aggregate;
    log << id << ": targets=" << report.targets.size() << " hamming=" << g.hamming
        << " structure=" << g.mean_structure << " oracle_ddg=" << g.mean_oracle_ddg << " success=" << g.success_rate
        << '\n';
    return report;
}

nlohmann::json ablate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log)
{
    cfg.validate();
    require(empty_or_missing(out_dir), ErrorKind::usage, "ablation directory " + out_dir.string() + " is not empty");
    ensure_dir(out_dir);
    const auto dataset = obtain_dataset(cfg);
    write_text(out_dir / "dataset.json", serialize(dataset));

    struct Row {
        std::string arm;
        std::uint64_t seed;
        nlohmann::json metrics;
    };
    std::vector<Row> rows;
    for (const auto seed : cfg.ablate.seeds) {
        auto seeded = cfg;
        seeded.seed = seed;
        seeded.propagate_seed();
        const auto base = base_model(seeded, dataset);
        for (const auto& name : cfg.ablate.arms) {
            auto run_cfg = seeded;
            run_cfg.train.ablation = rl::arm(name);
            rl::TrainerState state{base, base, 0};
            rl::IterationMetrics last;
            train_loop(state, run_cfg, dataset, [&](const rl::IterationMetrics& m, const rl::TrainerState&) { last = m; });
            const auto report = eval::evaluate_checkpoint(state.policy, dataset, run_cfg.eval,
                                                          name + "/seed" + std::to_string(seed), &base, cfg.execution);
            auto m = report.aggregate.to_json();
            m["kl_to_reference"] = report.kl_to_reference.value_or(0.0);
            m["train_reward"] = last.mean_reward;
            m["train_d_cos"] = last.d_cos;
            rows.push_back({name, seed, m});
            log << name << " seed" << seed << " hamming=" << m["hamming_diversity"].get<double>()
                << " kl=" << m["kl_to_reference"].get<double>()
                << " structure=" << m["mean_structure_match"].get<double>()
                << " oracle_ddg=" << m["mean_oracle_ddg"].get<double>() << '\n';
        }
    }

    std::vector<std::string> keys;
    for (const auto& [k, v] : rows.front().metrics.items()) {
        if (v.is_number()) {
            keys.push_back(k);
        }
    }

    nlohmann::json table;
    table["format"] = "pzero-ablation/1";
    table["config"] = to_json(cfg);
    table["dataset_hash"] = hash_hex(serialize(dataset));
    auto find = [&](const std::string& arm, std::uint64_t seed) -> const nlohmann::json* {
        for (const auto& r : rows) {
            if (r.arm == arm && r.seed == seed) {
                return &r.metrics;
            }
        }
        return nullptr;
    };
    const bool has_full = std::find(cfg.ablate.arms.begin(), cfg.ablate.arms.end(), "full") != cfg.ablate.arms.end();
    table["runs"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json run{{"arm", r.arm}, {"seed", r.seed}, {"metrics", r.metrics}};
        if (has_full) {
            // same seed, same base model: the per-seed diversity difference
            const auto& f = *find("full", r.seed);
            run["hamming_delta_vs_full"] = r.metrics["hamming_diversity"].get<double>() - f["hamming_diversity"].get<double>();
            run["d_cos_delta_vs_full"] = r.metrics["train_d_cos"].get<double>() - f["train_d_cos"].get<double>();
        }
        table["runs"].push_back(run);
    }
    const double n_seeds = static_cast<double>(cfg.ablate.seeds.size());
    for (const auto& arm : cfg.ablate.arms) {
        nlohmann::json mean, delta;
        for (const auto& k : keys) {
            double s = 0.0, d = 0.0;
            for (const auto seed : cfg.ablate.seeds) {
                const double v = (*find(arm, seed))[k].get<double>();
                s += v;
                if (has_full) {
                    d += v - (*find("full", seed))[k].get<double>();
                }
            }
            mean[k] = s / n_seeds;
            if (has_full) {
                delta[k] = d / n_seeds;
            }
        }
        table["mean"][arm] = mean;
        if (has_full) {
            table["paired_delta_vs_full"][arm] = delta;
        }
    }
    write_json(out_dir / "table.json", table);

    std::ostringstream tsv;
    tsv << "arm\tseed";
    for (const auto& k : keys) {
        tsv << '\t' << k;
    }
    if (has_full) {
        tsv << "\thamming_delta_vs_full";
    }
    tsv << '\n';
    for (const auto& r : table["runs"]) {
        tsv << r["arm"].get<std::string>() << '\t' << r["seed"].get<std::uint64_t>();
        for (const auto& k : keys) {
            tsv << '\t' << r["metrics"][k].get<double>();
        }
        if (has_full) {
            tsv << '\t' << r["hamming_delta_vs_full"].get<double>();
        }
        tsv << '\n';
    }
    write_text(out_dir / "table.tsv", tsv.str());
    return table;
}

bool theory(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log)
{
    cfg.validate();
    const auto checks = theory::run_suite(cfg.theory);
    bool all = true;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : checks) {
        all = all && c.pass;
        list.push_back(c.to_json());
        log << (c.pass ? "PASS " : "FAIL ") << c.name << '\n';
    }
    ensure_dir(out_dir);
    write_json(out_dir / "theory_report.json", {{"format", "pzero-theory/1"},
                                                {"config", to_json(cfg)["theory"]},
                                                {"seed", cfg.theory.seed},
                                                {"checks", list},
                                                {"all_pass", all}});
    return all;
}

}  // namespace pzero::run
