#pragma once

// Subcommand bodies shared by the CLI and the acceptance driver. Everything
// here reads and writes plain JSON files under a run directory:
//   config.json  dataset.json  manifest.json  reference.json
//   checkpoints/iter_NNNN.json  metrics.jsonl  curve.jsonl

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pzero/config.hpp"
#include "pzero/dataset.hpp"
#include "pzero/eval.hpp"
#include "pzero/rl.hpp"

namespace pzero::run {

namespace fs = std::filesystem;

std::string hash_hex(const std::string& text);

nlohmann::json read_json(const fs::path& path);
/// Write to a temporary sibling, then rename.
void write_json(const fs::path& path, const nlohmann::json& j);
void write_text(const fs::path& path, const std::string& text);

/// Dataset from cfg.dataset_path when set, otherwise generated from cfg.dataset.
Dataset obtain_dataset(const RunConfig& cfg);

/// Randomly initialized policy for the dataset's chain length, warm-started on
/// the training wild types. Serves as both the starting point and the frozen
/// reference of fine-tuning.
policy::PolicyParams base_model(const RunConfig& cfg, const Dataset& dataset);

using IterationHook = std::function<void(const rl::IterationMetrics&, const rl::TrainerState&)>;

/// Runs iterations state.iteration + 1 .. cfg.train.iterations in memory.
void train_loop(rl::TrainerState& state, const RunConfig& cfg, const Dataset& dataset,
                const IterationHook& hook = {});

void make_dataset(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log);

/// Fresh run into an empty (or missing) directory, or a resumed one.
/// Config error when a resumed run's config differs from its snapshot in
/// anything but a larger iteration count; io error for corrupt checkpoints.
void train(const RunConfig& cfg, const fs::path& out_dir, bool resume, std::ostream& log);

struct EvalRequest {
    fs::path run_dir;
    std::optional<fs::path> checkpoint;  // default: latest in run_dir
    std::optional<fs::path> reference;   // default: run_dir/reference.json
    std::vector<std::string> target_ids; // default: every test target
};

eval::EvalReport evaluate(const RunConfig& cfg, const EvalRequest& req, const fs::path& out_dir, std::ostream& log);

/// Every arm x seed, trained and evaluated on the test split. Writes
/// table.json and table.tsv.
nlohmann::json ablate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log);

/// Returns true if every check passed. Writes theory_report.json.
bool theory(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log);

/// Checkpoint helpers (exposed for tests).
fs::path checkpoint_path(const fs::path& run_dir, int iteration);
std::optional<fs::path> latest_checkpoint(const fs::path& run_dir);
struct Checkpoint {
    int iteration = 0;
    policy::PolicyParams policy;
    nlohmann::json metrics;  // null for iteration 0
};
Checkpoint load_checkpoint(const fs::path& path);

}  // namespace pzero::run
