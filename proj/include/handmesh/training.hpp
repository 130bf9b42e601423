#pragma once

#include "handmesh/config.hpp"
#include "handmesh/dataset.hpp"
#include "handmesh/model.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace handmesh {

using Model = HandMeshModel<float>;

class TrainingError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Step-drop schedule: lr until floor(drop_at·total), then lr·drop_factor.
double learning_rate(const OptimizerConfig& o, Index step, Index total_steps);

/// Decoupled weight decay Adam. Decay applies to weight matrices and kernels
/// only (names ending in ".weight").
class AdamW {
   public:
    AdamW(ParameterList<float> params, const OptimizerConfig& cfg);
    void step(double lr);
    Index steps_taken() const { return t_; }

   private:
    ParameterList<float> params_;
    OptimizerConfig cfg_;
    std::vector<Vector<float>> m_;
    std::vector<Vector<float>> v_;
    std::vector<bool> decay_;
    Index t_ = 0;
};

struct StepLog {
    Index step = 0;
    double lr = 0;
    double vert = 0;
    double j3d = 0;
    double j2d = 0;
    double total = 0;
};

struct LossValues {
    double vert = 0, j3d = 0, j2d = 0, total = 0;
};

/// Forward + loss for one example; gradients are recorded when grad mode is on.
LossBreakdown<float> example_loss(const Model& model, const Example& ex, const Var<float>& regressor,
                                  const LossWeights& w);

/// Mean loss over a dataset without recording gradients.
LossValues dataset_loss(const Model& model, const Dataset& data, const LossWeights& w);

struct TrainOptions {
    std::string log_csv;   // per-step losses; empty disables
    std::string dump_dir;  // where a non-finite-loss diagnostic is written
    std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
    std::vector<StepLog> log;
    double seconds = 0;
    double steps_per_second() const { return seconds > 0 ? double(log.size()) / seconds : 0; }
};

TrainResult train(Model& model, const Dataset& data, const ExperimentConfig& cfg, const TrainOptions& opts = {});

/// checkpoint.rec (named weights, config in the header) + config.json.
void save_checkpoint(const std::string& dir, const Model& model, const ExperimentConfig& cfg);

struct LoadedCheckpoint {
    ExperimentConfig config;
    std::unique_ptr<Model> model;
};
/// Accepts the run directory or the checkpoint file itself.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// train + checkpoint + log into cfg.output_dir.
TrainResult run_training(const ExperimentConfig& cfg);

}  // namespace handmesh
