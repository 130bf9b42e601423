#pragma once

#include "handmesh/config.hpp"
#include "handmesh/model.hpp"

#include <vector>

namespace handmesh {

struct LatencyStats {
    double mean_ms = 0;
    double median_ms = 0;
    double p95_ms = 0;
    Index iterations = 0;
};

/// Nearest-rank percentiles over the recorded samples.
LatencyStats latency_stats(std::vector<double> samples_ms);

struct BenchResult {
    LatencyStats latency;
    ParameterSplit params;
};

/// Times `iterations` inference forwards on one fixed input after `warmup`
/// discarded runs. Single-threaded.
BenchResult bench(const ModelConfig& cfg, std::uint64_t seed, Index iterations, Index warmup = 3);

json to_json(const BenchResult& r);

}  // namespace handmesh
