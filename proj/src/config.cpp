#include "pzero/config.hpp"

#include <fstream>

#include "pzero/error.hpp"

namespace pzero {

namespace {

nlohmann::json sampler_json(const policy::Sampler& s)
{
    return {{"temperature", s.temperature}, {"top_p", s.top_p}};
}

policy::Sampler sampler_from(const nlohmann::json& j)
{
    return {j.at("temperature").get<double>(), j.at("top_p").get<double>()};
}

// Every key of `user` must exist in `defaults` (recursively for objects).
void check_keys(const nlohmann::json& defaults, const nlohmann::json& user, const std::string& where)
{
    require(user.is_object(), ErrorKind::config, "config section '" + where + "' must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        require(defaults.contains(key), ErrorKind::config, "unknown config key '" + path + "'");
        if (defaults.at(key).is_object() && !defaults.at(key).empty()) {
            check_keys(defaults.at(key), value, path);
        }
    }
}

const char* execution_name(rl::Execution e)
{
    return e == rl::Execution::serial ? "serial" : "parallel";
}

}  // namespace

void RunConfig::propagate_seed()
{
    train.seed = seed;
    eval.seed = seed;
    theory.seed = seed;
}

void RunConfig::validate() const
{
    require(dataset.length >= 3 && dataset.length <= lattice::max_length, ErrorKind::capacity,
            "dataset length must lie in [3, " + std::to_string(lattice::max_length) + "]");
    require(dataset.n_train >= 1 && dataset.n_test >= 1, ErrorKind::config, "dataset needs train and test targets");
    require(policy.embedding > 0 && policy.context > 0 && policy.hidden > 0, ErrorKind::config,
            "policy sizes must be positive");
    require(policy.init_scale >= 0.0, ErrorKind::config, "init_scale must be nonnegative");
    pretrain.validate();
    train.validate();
    eval.validate();
    theory.validate();
    require(!ablate.arms.empty() && !ablate.seeds.empty(), ErrorKind::config, "ablation needs arms and seeds");
    for (const auto& a : ablate.arms) {
        rl::arm(a).validate();
    }
}

RunConfig default_config()
{
    RunConfig cfg;
    cfg.train.learning_rate = 0.1;
    cfg.propagate_seed();
    return cfg;
}

nlohmann::json to_json(const rl::TrainConfig& t)
{
    const auto& a = t.ablation;
    return {{"algorithm", rl::to_string(t.algorithm)},
            {"alpha_kl", t.alpha_kl},
            {"beta_kl", t.beta_kl ? nlohmann::json(*t.beta_kl) : nlohmann::json(nullptr)},
            {"alpha_div", t.alpha_div},
            {"lambda_struct", t.weights.structure},
            {"lambda_ddg", t.weights.ddg},
            {"bonus_weight", t.weights.bonus},
            {"group_size", t.group_size},
            {"iterations", t.iterations},
            {"sampler", sampler_json(t.sampler)},
            {"clip_eps", t.clip_eps},
            {"learning_rate", t.learning_rate},
            {"updates_per_iteration", t.updates_per_iteration},
            {"gate_threshold", t.gate_threshold},
            {"gate_fraction", t.gate_fraction},
            {"dpo_beta", t.dpo_beta},
            {"dpo_sampler", sampler_json(t.dpo_sampler)},
            {"dpo_diversity", t.dpo_diversity},
            {"ablation",
             {{"no_div", a.no_div},
              {"no_kl", a.no_kl},
              {"diversity_as_reward", a.diversity_as_reward},
              {"hamming_as_reward", a.hamming_as_reward},
              {"tm_only", a.tm_only},
              {"ddg_only", a.ddg_only}}}};
}

nlohmann::json to_json(const RunConfig& c)
{
    return {{"seed", c.seed},
            {"dataset",
             {{"length", c.dataset.length},
              {"n_train", c.dataset.n_train},
              {"n_test", c.dataset.n_test},
              {"seed", c.dataset.seed},
              {"max_trials", c.dataset.max_trials},
              {"path", c.dataset_path}}},
            {"policy",
             {{"embedding", c.policy.embedding},
              {"context", c.policy.context},
              {"hidden", c.policy.hidden},
              {"init_scale", c.policy.init_scale}}},
            {"pretrain",
             {{"steps", c.pretrain.steps},
              {"learning_rate", c.pretrain.learning_rate},
              {"masked_prior", c.pretrain.masked_prior},
              {"corpus", rl::to_string(c.pretrain.corpus)}}},
            {"train", to_json(c.train)},
            {"execution", execution_name(c.execution)},
            {"eval",
             {{"sampler", sampler_json(c.eval.sampler)},
              {"samples_per_target", c.eval.samples_per_target},
              {"success_threshold", c.eval.success_threshold},
              {"oracle_temperature", c.eval.oracle_temperature}}},
            {"theory",
             {{"length", c.theory.length},
              {"alpha_kl", c.theory.alpha_kl},
              {"alpha_div", c.theory.alpha_div},
              {"damping", c.theory.damping},
              {"random_trials", c.theory.random_trials}}},
            {"ablate", {{"arms", c.ablate.arms}, {"seeds", c.ablate.seeds}}}};
}

RunConfig config_from_json(const nlohmann::json& user)
{
    const auto defaults = to_json(default_config());
    check_keys(defaults, user, "");
    auto j = defaults;
    j.merge_patch(user);
    if (user.contains("train") && user["train"].contains("beta_kl")) {
        j["train"]["beta_kl"] = user["train"]["beta_kl"];  // merge_patch drops explicit nulls
    }
    RunConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        const auto& d = j.at("dataset");
        c.dataset.length = d.at("length").get<int>();
        c.dataset.n_train = d.at("n_train").get<std::size_t>();
        c.dataset.n_test = d.at("n_test").get<std::size_t>();
        c.dataset.seed = d.at("seed").get<std::uint64_t>();
        c.dataset.max_trials = d.at("max_trials").get<std::size_t>();
        c.dataset_path = d.at("path").get<std::string>();
        const auto& p = j.at("policy");
        c.policy.embedding = p.at("embedding").get<std::size_t>();
        c.policy.context = p.at("context").get<std::size_t>();
        c.policy.hidden = p.at("hidden").get<std::size_t>();
        c.policy.init_scale = p.at("init_scale").get<double>();
        const auto& pt = j.at("pretrain");
        c.pretrain.steps = pt.at("steps").get<int>();
        c.pretrain.learning_rate = pt.at("learning_rate").get<double>();
        c.pretrain.masked_prior = pt.at("masked_prior").get<bool>();
        c.pretrain.corpus = rl::parse_corpus(pt.at("corpus").get<std::string>());
        const auto& t = j.at("train");
        auto& tc = c.train;
        tc.algorithm = rl::parse_algorithm(t.at("algorithm").get<std::string>());
        tc.alpha_kl = t.at("alpha_kl").get<double>();
        tc.beta_kl = t.at("beta_kl").is_null() ? std::nullopt : std::optional<double>(t.at("beta_kl").get<double>());
        tc.alpha_div = t.at("alpha_div").get<double>();
        tc.weights.structure = t.at("lambda_struct").get<double>();
        tc.weights.ddg = t.at("lambda_ddg").get<double>();
        tc.weights.bonus = t.at("bonus_weight").get<double>();
        tc.group_size = t.at("group_size").get<std::size_t>();
        tc.iterations = t.at("iterations").get<int>();
        tc.sampler = sampler_from(t.at("sampler"));
        tc.clip_eps = t.at("clip_eps").get<double>();
        tc.learning_rate = t.at("learning_rate").get<double>();
        tc.updates_per_iteration = t.at("updates_per_iteration").get<int>();
        tc.gate_threshold = t.at("gate_threshold").get<double>();
        tc.gate_fraction = t.at("gate_fraction").get<double>();
        tc.dpo_beta = t.at("dpo_beta").get<double>();
        tc.dpo_sampler = sampler_from(t.at("dpo_sampler"));
        tc.dpo_diversity = t.at("dpo_diversity").get<bool>();
        const auto& a = t.at("ablation");
        tc.ablation.no_div = a.at("no_div").get<bool>();
        tc.ablation.no_kl = a.at("no_kl").get<bool>();
        tc.ablation.diversity_as_reward = a.at("diversity_as_reward").get<bool>();
        tc.ablation.hamming_as_reward = a.at("hamming_as_reward").get<bool>();
        tc.ablation.tm_only = a.at("tm_only").get<bool>();
        tc.ablation.ddg_only = a.at("ddg_only").get<bool>();
        const auto ex = j.at("execution").get<std::string>();
        require(ex == "serial" || ex == "parallel", ErrorKind::config, "execution must be serial or parallel");
        c.execution = ex == "serial" ? rl::Execution::serial : rl::Execution::parallel;
        const auto& e = j.at("eval");
        c.eval.sampler = sampler_from(e.at("sampler"));
        c.eval.samples_per_target = e.at("samples_per_target").get<std::size_t>();
        c.eval.success_threshold = e.at("success_threshold").get<double>();
        c.eval.oracle_temperature = e.at("oracle_temperature").get<double>();
        const auto& th = j.at("theory");
        c.theory.length = th.at("length").get<std::size_t>();
        c.theory.alpha_kl = th.at("alpha_kl").get<double>();
        c.theory.alpha_div = th.at("alpha_div").get<double>();
        c.theory.damping = th.at("damping").get<double>();
        c.theory.random_trials = th.at("random_trials").get<int>();
        const auto& ab = j.at("ablate");
        c.ablate.arms = ab.at("arms").get<std::vector<std::string>>();
        c.ablate.seeds = ab.at("seeds").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("bad config value: ") + e.what());
    }
    c.propagate_seed();
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot read config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace pzero
