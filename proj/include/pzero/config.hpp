#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pzero/dataset.hpp"
#include "pzero/eval.hpp"
#include "pzero/rl.hpp"
#include "pzero/theory.hpp"

namespace pzero {

struct PolicyConfig {
    std::size_t embedding = 8;
    std::size_t context = 16;
    std::size_t hidden = 32;
    double init_scale = 0.1;
};

struct AblateConfig {
    std::vector<std::string> arms{"full", "no_div", "no_kl", "tm_only", "ddg_only", "diversity_reward", "hamming_reward"};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

/// Everything a subcommand needs. The master seed feeds the rollout, init and
/// evaluation streams; the dataset has its own seed so that runs with
/// different master seeds share one dataset.
struct RunConfig {
    std::uint64_t seed = 0;
    DatasetSpec dataset{14, 30, 10, 1, 0};
    std::string dataset_path;  // empty: <out-dir>/dataset.json
    PolicyConfig policy;
    rl::PretrainConfig pretrain{300, 0.5, false, rl::Corpus::designing};
    rl::TrainConfig train;
    rl::Execution execution = rl::Execution::parallel;
    eval::EvalConfig eval;
    theory::TheoryConfig theory;
    AblateConfig ablate;

    /// Copies the master seed into the per-module configs.
    void propagate_seed();
    void validate() const;
};

/// Default run configuration (the train learning rate is raised from the
/// plain-descent default; see README).
RunConfig default_config();

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays `j` on the defaults. Config error for unknown keys or bad values.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const rl::TrainConfig& cfg);

}  // namespace pzero
