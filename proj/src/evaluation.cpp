#include "handmesh/evaluation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace handmesh {
namespace fs = std::filesystem;

namespace {

RowMatrix<double> to_double(const Tensor<float>& t) { return t.matrix().cast<double>(); }

constexpr const char* kCsvHeader = "index,mpjpe_mm,mpvpe_mm,pa_mpjpe_mm,pa_mpvpe_mm,f_at_05,f_at_15";

}  // namespace

MetricsReport mean_report(const std::vector<MetricsReport>& samples) {
    MetricsReport m;
    if (samples.empty()) return m;
    for (const auto& s : samples) {
        m.mpjpe_mm += s.mpjpe_mm;
        m.mpvpe_mm += s.mpvpe_mm;
        m.pa_mpjpe_mm += s.pa_mpjpe_mm;
        m.pa_mpvpe_mm += s.pa_mpvpe_mm;
        m.f_at_05 += s.f_at_05;
        m.f_at_15 += s.f_at_15;
    }
    const double n = double(samples.size());
    m.mpjpe_mm /= n;
    m.mpvpe_mm /= n;
    m.pa_mpjpe_mm /= n;
    m.pa_mpvpe_mm /= n;
    m.f_at_05 /= n;
    m.f_at_15 /= n;
    return m;
}

EvalResult evaluate_predictor(const VertexPredictor& predict, const Dataset& data, FScoreMode mode) {
    EvalResult r;
    r.mode = mode;
    const RowMatrix<double>& j = default_hand().regressor.matrix();
    for (Index i = 0; i < data.size(); ++i) {
        const Example ex = data.get(i);
        const RowMatrix<double> v = predict(i, ex);
        r.per_sample.push_back(evaluate_sample(v, to_double(ex.vertices), j * v, to_double(ex.joints_3d), mode));
    }
    r.mean = mean_report(r.per_sample);
    return r;
}

EvalResult evaluate(const Model& model, const Dataset& data, FScoreMode mode) {
    NoGradGuard no_grad;
    return evaluate_predictor(
        [&](Index, const Example& ex) { return to_double(model.forward(ex.input).vertices().value()); }, data, mode);
}

json to_json(const MetricsReport& r) {
    return {{"mpjpe_mm", r.mpjpe_mm},       {"mpvpe_mm", r.mpvpe_mm}, {"pa_mpjpe_mm", r.pa_mpjpe_mm},
            {"pa_mpvpe_mm", r.pa_mpvpe_mm}, {"f_at_05", r.f_at_05},   {"f_at_15", r.f_at_15}};
}

json report_json(const EvalResult& r) {
    json j = to_json(r.mean);
    j["samples"] = r.per_sample.size();
    j["f_score_mode"] = to_string(r.mode);
    j["f_score_note"] = "F@05/F@15 use a nearest-neighbour precision/recall convention after Procrustes alignment "
                        "unless f_score_mode says otherwise";
    return j;
}

void write_per_sample_csv(const std::string& path, const EvalResult& r) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << kCsvHeader << "\n";
    char line[512];
    for (std::size_t i = 0; i < r.per_sample.size(); ++i) {
        const auto& s = r.per_sample[i];
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, s.mpjpe_mm, s.mpvpe_mm,
                      s.pa_mpjpe_mm, s.pa_mpvpe_mm, s.f_at_05, s.f_at_15);
        out << line;
    }
}

std::vector<MetricsReport> read_per_sample_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    std::getline(in, line);
    if (line != kCsvHeader) throw std::runtime_error("'" + path + "' is not a per-sample metrics CSV");
    std::vector<MetricsReport> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricsReport m;
        long index = 0;
        if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf,%lf,%lf", &index, &m.mpjpe_mm, &m.mpvpe_mm, &m.pa_mpjpe_mm,
                        &m.pa_mpvpe_mm, &m.f_at_05, &m.f_at_15) != 7) {
            throw std::runtime_error("malformed row in '" + path + "': " + line);
        }
        out.push_back(m);
    }
    return out;
}

EvalResult run_evaluation(const std::string& checkpoint, const DatasetSpec& spec, const std::string& out_dir,
                          const ModelConfig* expected_model) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    if (expected_model && to_json(*expected_model) != to_json(ck.config.model)) {
        throw ConfigError("config does not match the checkpoint's model (expected " +
                          to_json(ck.config.model).dump() + ")");
    }
    const auto data = open_dataset(spec);
    EvalResult r = evaluate(*ck.model, *data, ck.config.f_score_mode);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        json report = report_json(r);
        report["checkpoint"] = checkpoint;
        report["dataset"] = data->describe();
        write_json_file((fs::path(out_dir) / "metrics.json").string(), report);
        write_per_sample_csv((fs::path(out_dir) / "per_sample.csv").string(), r);
    }
    return r;
}

}  // namespace handmesh
