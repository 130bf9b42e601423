#include "handmesh/bench.hpp"
#include "handmesh/synthetic_hand.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace handmesh {

LatencyStats latency_stats(std::vector<double> samples) {
    LatencyStats s;
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    s.iterations = static_cast<Index>(n);
    s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / double(n);
    s.median_ms = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    const std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * double(n)));
    s.p95_ms = samples[std::max<std::size_t>(rank, 1) - 1];
    return s;
}

BenchResult bench(const ModelConfig& cfg, std::uint64_t seed, Index iterations, Index warmup) {
    if (iterations < 10) throw ConfigError("bench needs at least 10 iterations");
    const HandMeshModel<float> model(cfg, seed);
    const HandSample sample = generate_sample(default_hand(), sample_seed(seed, 0));
    const Var<float> input = Var<float>::constant(sample.input);
    NoGradGuard no_grad;
    for (Index i = 0; i < warmup; ++i) model.forward(input);
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(iterations));
    for (Index i = 0; i < iterations; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const auto out = model.forward(input);
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    return {latency_stats(std::move(times)), model.parameter_split()};
}

json to_json(const BenchResult& r) {
    return {{"latency_ms",
             {{"mean", r.latency.mean_ms}, {"median", r.latency.median_ms}, {"p95", r.latency.p95_ms}}},
            {"iterations", r.latency.iterations},
            {"params",
             {{"backbone", r.params.backbone},
              {"token_generator", r.params.token_generator},
              {"regressor", r.params.regressor},
              {"non_backbone", r.params.non_backbone()},
              {"total", r.params.total()}}}};
}

}  // namespace handmesh
