#pragma once

#include "handmesh/config.hpp"
#include "handmesh/dataset.hpp"
#include "handmesh/metrics.hpp"
#include "handmesh/training.hpp"

#include <functional>
#include <string>
#include <vector>

namespace handmesh {

struct EvalResult {
    MetricsReport mean;
    std::vector<MetricsReport> per_sample;
    FScoreMode mode = FScoreMode::NearestNeighbor;
};

MetricsReport mean_report(const std::vector<MetricsReport>& samples);

/// Predicted vertices (778×3 mm) for dataset item i.
using VertexPredictor = std::function<RowMatrix<double>(Index, const Example&)>;

/// Joints are regressed from the predicted vertices with the template's J and
/// compared against the stored ground-truth joints.
EvalResult evaluate_predictor(const VertexPredictor& predict, const Dataset& data, FScoreMode mode);
EvalResult evaluate(const Model& model, const Dataset& data, FScoreMode mode);

json to_json(const MetricsReport& r);
json report_json(const EvalResult& r);
void write_per_sample_csv(const std::string& path, const EvalResult& r);
std::vector<MetricsReport> read_per_sample_csv(const std::string& path);

/// metrics.json + per_sample.csv in out_dir. When `expected_model` is given it
/// must match the checkpoint's model config.
EvalResult run_evaluation(const std::string& checkpoint, const DatasetSpec& data, const std::string& out_dir,
                          const ModelConfig* expected_model = nullptr);

}  // namespace handmesh
