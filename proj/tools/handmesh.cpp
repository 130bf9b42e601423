#include "handmesh/ablation.hpp"
#include "handmesh/bench.hpp"
#include "handmesh/config.hpp"
#include "handmesh/dataset.hpp"
#include "handmesh/evaluation.hpp"
#include "handmesh/training.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

using namespace handmesh;
namespace fs = std::filesystem;

namespace {

void fail(const std::string& command, const std::string& message) {
    std::cerr << json{{"error", message}, {"command", command}}.dump() << std::endl;
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

ExperimentConfig config_or_default(const std::string& path) {
    if (path.empty()) return ExperimentConfig{};
    return load_experiment(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hand mesh decoder: synthetic data, training, evaluation, ablation and benchmarking"};
    app.require_subcommand(1);

    std::string config_path, out_dir, dataset_dir, grid_path, checkpoint;
    std::optional<std::uint64_t> seed;
    std::optional<Index> steps;
    Index count = 0, iters = 50;

    auto* gen = app.add_subcommand("gen-data", "Write n synthetic samples and a manifest");
    gen->add_option("-n,--count", count, "Number of samples")->required();
    gen->add_option("--seed", seed, "Dataset seed");
    gen->add_option("--out", out_dir, "Output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
    train_cmd->add_option("--config", config_path, "Experiment config JSON")->required();
    train_cmd->add_option("--out", out_dir, "Run directory (overrides output_dir)");
    train_cmd->add_option("--seed", seed, "Run seed (overrides config)");
    train_cmd->add_option("--steps", steps, "Total steps (overrides config)");
    train_cmd->add_option("--dataset", dataset_dir, "Dataset directory (overrides config)");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", checkpoint, "Run directory or checkpoint.rec")->required();
    eval_cmd->add_option("--dataset", dataset_dir, "Dataset directory (defaults to the run's eval set)");
    eval_cmd->add_option("--config", config_path, "Config the checkpoint must match");
    eval_cmd->add_option("--out", out_dir, "Where metrics.json and per_sample.csv go");

    auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate every cell of a grid");
    ablate_cmd->add_option("--grid", grid_path, "Grid file (JSON)")->required();
    ablate_cmd->add_option("--out", out_dir, "Output directory")->required();

    auto* bench_cmd = app.add_subcommand("bench", "Time inference and count parameters");
    bench_cmd->add_option("--config", config_path, "Experiment config JSON (default: reference config)");
    bench_cmd->add_option("--iters", iters, "Timed iterations (>= 10)");
    bench_cmd->add_option("--seed", seed, "Weight seed");
    bench_cmd->add_option("--out", out_dir, "Directory for bench.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail("parse", e.what());
        return 2;
    }

    std::string command = app.get_subcommands().front()->get_name();
    try {
        if (command == "gen-data") {
            write_dataset(out_dir, count, seed.value_or(0));
            emit({{"dataset", out_dir}, {"count", count}, {"seed", seed.value_or(0)}});
        } else if (command == "train") {
            ExperimentConfig cfg = load_experiment(config_path);
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (seed) cfg.seed = *seed;
            if (steps) cfg.steps = *steps;
            if (!dataset_dir.empty()) cfg.dataset = DatasetSpec{dataset_dir};
            validate(cfg);
            const TrainResult r = run_training(cfg);
            json out = {{"run", cfg.output_dir}, {"steps", r.log.size()}, {"seconds", r.seconds}};
            if (!r.log.empty()) {
                out["initial_total_loss"] = r.log.front().total;
                out["final_total_loss"] = r.log.back().total;
            }
            emit(out);
        } else if (command == "eval") {
            DatasetSpec data;
            if (!dataset_dir.empty()) {
                data.path = dataset_dir;
            } else {
                const LoadedCheckpoint ck = load_checkpoint(checkpoint);
                data = ck.config.eval_dataset.procedural() && ck.config.eval_dataset.count == 0
                           ? ck.config.dataset
                           : ck.config.eval_dataset;
            }
            std::optional<ModelConfig> expected;
            if (!config_path.empty()) expected = load_experiment(config_path).model;
            const EvalResult r = run_evaluation(checkpoint, data, out_dir, expected ? &*expected : nullptr);
            emit(report_json(r));
        } else if (command == "ablate") {
            AblationOptions opts;
            opts.log = [](const std::string& msg) { std::cerr << msg << std::endl; };
            const auto rows = run_ablation(load_grid(grid_path), out_dir, opts);
            emit({{"csv", (fs::path(out_dir) / "ablation.csv").string()},
                  {"rows", rows.size()},
                  {"summary", to_json(summarize(rows))}});
        } else if (command == "bench") {
            const ExperimentConfig cfg = config_or_default(config_path);
            const BenchResult r = bench(cfg.model, seed.value_or(cfg.seed), iters);
            json out = to_json(r);
            out["config"] = to_json(cfg.model);
            if (!out_dir.empty()) {
                fs::create_directories(out_dir);
                write_json_file((fs::path(out_dir) / "bench.json").string(), out);
            }
            emit(out);
        }
    } catch (const std::exception& e) {
        fail(command, e.what());
        return 1;
    }
    return 0;
}
