#pragma once

#include "handmesh/loss.hpp"
#include "handmesh/metrics.hpp"
#include "handmesh/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace handmesh {

using json = nlohmann::json;

struct OptimizerConfig {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double drop_factor = 0.1;
    double drop_at = 0.5;  // fraction of total steps
};

/// A directory of records, or a procedurally generated set (count, seed)
/// whose samples are produced on demand. count == 0 with no path means unset.
struct DatasetSpec {
    std::string path;
    Index count = 0;
    std::uint64_t seed = 0;
    bool procedural() const { return path.empty(); }
};

struct ExperimentConfig {
    ModelConfig model;
    LossWeights loss;
    OptimizerConfig optimizer;
    Index steps = 2000;
    Index batch_size = 4;
    std::uint64_t seed = 0;
    DatasetSpec dataset;
    DatasetSpec eval_dataset;
    std::string output_dir;
    Index log_every = 1;
    FScoreMode f_score_mode = FScoreMode::NearestNeighbor;
};

json to_json(const SamplerConfig& s);
json to_json(const DecoderConfig& d);
json to_json(const ModelConfig& m);
json to_json(const DatasetSpec& d);
json to_json(const ExperimentConfig& c);

SamplerConfig sampler_from_json(const json& j, const SamplerConfig& base = {});
DecoderConfig decoder_from_json(const json& j, const DecoderConfig& base = {});
ModelConfig model_from_json(const json& j, const ModelConfig& base = {});
DatasetSpec dataset_from_json(const json& j);
/// Unknown keys are rejected. Missing keys keep the values of `base`.
ExperimentConfig experiment_from_json(const json& j, const ExperimentConfig& base = {});

void validate(const ExperimentConfig& c);

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);
ExperimentConfig load_experiment(const std::string& path);

}  // namespace handmesh
