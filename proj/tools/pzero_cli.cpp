// pzero: dataset generation, fine-tuning, evaluation, ablations and the
// mean-field checks from one binary.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pzero/config.hpp"
#include "pzero/error.hpp"
#include "pzero/runner.hpp"

namespace {

constexpr int usage_exit = 9;

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"HP lattice design with online RL fine-tuning"};
    app.require_subcommand(0, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool print_config = false;
    std::string out_dir = "out";
    app.add_option("--config", config_path, "JSON config overlaid on the defaults")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_flag("--print-config", print_config, "print the effective config and exit");

    auto* make_ds = app.add_subcommand("make-dataset", "generate train/test targets");
    make_ds->fallthrough();

    auto* train = app.add_subcommand("train", "fine-tune the policy");
    train->fallthrough();
    bool resume = false;
    std::optional<int> iterations;
    train->add_flag("--resume", resume, "continue the run in --out-dir from its latest checkpoint");
    train->add_option("--iterations", iterations, "iteration budget (overrides the config)");

    auto* ev = app.add_subcommand("eval", "score a checkpoint on held-out targets");
    ev->fallthrough();
    std::string run_dir;
    std::string checkpoint, reference;
    std::vector<std::string> targets;
    ev->add_option("--run-dir", run_dir, "training run directory")->required();
    ev->add_option("--checkpoint", checkpoint, "checkpoint file (default: latest in the run)");
    ev->add_option("--reference", reference, "reference policy for the KL column");
    ev->add_option("--targets", targets, "target ids (default: all test targets)");

    auto* ab = app.add_subcommand("ablate", "train and score every arm for every seed");
    ab->fallthrough();

    auto* th = app.add_subcommand("theory", "mean-field checks on a small finite space");
    th->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : usage_exit;
    }

    try {
        auto cfg = config_path.empty() ? pzero::default_config() : pzero::load_config(config_path);
        if (seed) {
            cfg.seed = *seed;
            cfg.propagate_seed();
        }
        if (iterations) {
            cfg.train.iterations = *iterations;
        }
        cfg.validate();

        if (print_config) {
            std::cout << pzero::to_json(cfg).dump(2) << '\n';
            return 0;
        }
        if (app.get_subcommands().empty()) {
            std::cerr << app.help();
            return usage_exit;
        }

        auto& log = std::cerr;
        if (make_ds->parsed()) {
            pzero::run::make_dataset(cfg, out_dir, log);
        } else if (train->parsed()) {
            pzero::run::train(cfg, out_dir, resume, log);
        } else if (ev->parsed()) {
            pzero::run::EvalRequest req;
            req.run_dir = run_dir;
            if (!checkpoint.empty()) {
                req.checkpoint = checkpoint;
            }
            if (!reference.empty()) {
                req.reference = reference;
            }
            req.target_ids = targets;
            pzero::run::evaluate(cfg, req, out_dir, log);
        } else if (ab->parsed()) {
            pzero::run::ablate(cfg, out_dir, log);
        } else if (th->parsed()) {
            return pzero::run::theory(cfg, out_dir, log) ? 0 : 1;
        }
        return 0;
    } catch (const pzero::Error& e) {
        std::cerr << "error (" << pzero::to_string(e.kind()) << "): " << e.what() << '\n';
        return pzero::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error (io): " << e.what() << '\n';
        return pzero::exit_code(pzero::ErrorKind::io);
    }
}
