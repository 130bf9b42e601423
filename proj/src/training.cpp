#include "handmesh/training.hpp"
#include "handmesh/loss.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace handmesh {
namespace fs = std::filesystem;

double learning_rate(const OptimizerConfig& o, Index step, Index total_steps) {
    const Index drop = static_cast<Index>(std::floor(o.drop_at * double(total_steps)));
    return step >= drop ? o.lr * o.drop_factor : o.lr;
}

AdamW::AdamW(ParameterList<float> params, const OptimizerConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.push_back(Vector<float>::Zero(p.var.size()));
        v_.push_back(Vector<float>::Zero(p.var.size()));
        const std::string& n = p.name;
        decay_.push_back(n.size() >= 7 && n.compare(n.size() - 7, 7, ".weight") == 0);
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const float b1 = float(cfg_.beta1), b2 = float(cfg_.beta2);
    const float step_size = float(lr / c1);
    const float inv_c2 = float(1.0 / c2);
    const float eps = float(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Var<float>& p = params_[i].var;
        if (p.grad().size() == 0) continue;
        auto theta = p.mutable_value().data().array();
        const auto g = p.grad().array();
        m_[i].array() = b1 * m_[i].array() + (1 - b1) * g;
        v_[i].array() = b2 * v_[i].array() + (1 - b2) * g.square();
        if (decay_[i]) theta *= float(1.0 - lr * cfg_.weight_decay);
        theta -= step_size * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
}

LossBreakdown<float> example_loss(const Model& model, const Example& ex, const Var<float>& regressor,
                                  const LossWeights& w) {
    const ModelOutput<float> out = model.forward(ex.input);
    return total_loss(out.vertices(), Var<float>::constant(ex.vertices), out.keypoints_2d(),
                      Var<float>::constant(ex.joints_2d), regressor, w);
}

LossValues dataset_loss(const Model& model, const Dataset& data, const LossWeights& w) {
    NoGradGuard no_grad;
    const Var<float> j = default_hand().regressor.as_constant<float>();
    LossValues acc;
    for (Index i = 0; i < data.size(); ++i) {
        const auto l = example_loss(model, data.get(i), j, w);
        acc.vert += l.vert;
        acc.j3d += l.j3d;
        acc.j2d += l.j2d;
        acc.total += l.total_value();
    }
    const double n = double(data.size());
    return {acc.vert / n, acc.j3d / n, acc.j2d / n, acc.total / n};
}

namespace {

void dump_non_finite(const TrainOptions& opts, const Model& model, const StepLog& log, Index sample) {
    json dump = {{"step", log.step}, {"sample_index", sample}, {"lr", log.lr},
                 {"losses", {{"vert", log.vert}, {"j3d", log.j3d}, {"j2d", log.j2d}, {"total", log.total}}}};
    json norms = json::object();
    for (const auto& p : model.parameters()) {
        const double n = p.var.value().data().template cast<double>().norm();
        norms[p.name] = std::isfinite(n) ? json(n) : json("non-finite");
    }
    dump["parameter_norms"] = norms;
    std::string where = "stderr";
    if (!opts.dump_dir.empty()) {
        where = (fs::path(opts.dump_dir) / "nan_dump.json").string();
        write_json_file(where, dump);
    } else {
        std::fprintf(stderr, "%s\n", dump.dump().c_str());
    }
    throw TrainingError("non-finite loss at step " + std::to_string(log.step) + " (sample " + std::to_string(sample) +
                        "); diagnostics in " + where);
}

}  // namespace

TrainResult train(Model& model, const Dataset& data, const ExperimentConfig& cfg, const TrainOptions& opts) {
    validate(cfg);
    TrainResult result;
    if (data.size() < 1) throw TrainingError("training set is empty");
    std::ofstream csv;
    if (!opts.log_csv.empty()) {
        csv.open(opts.log_csv, std::ios::trunc);
        if (!csv) throw TrainingError("cannot write '" + opts.log_csv + "'");
        csv << "step,lr,L_vert,L_J3d,L_J2d,total\n";
    }
    const ParameterList<float> params = model.parameters();
    AdamW optimizer(params, cfg.optimizer);
    const Var<float> regressor = default_hand().regressor.as_constant<float>();
    Rng order_rng = Rng::substream(cfg.seed, "data_order");
    std::vector<Index> order;
    std::size_t cursor = 0;
    auto next_index = [&]() {
        if (cursor == order.size()) {
            order.resize(static_cast<std::size_t>(data.size()));
            for (Index i = 0; i < data.size(); ++i) order[static_cast<std::size_t>(i)] = i;
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
            cursor = 0;
        }
        return order[cursor++];
    };

    const auto start = std::chrono::steady_clock::now();
    const float inv_batch = 1.0f / float(cfg.batch_size);
    for (Index step = 0; step < cfg.steps; ++step) {
        for (auto p : params) p.var.zero_grad();
        StepLog log;
        log.step = step;
        log.lr = learning_rate(cfg.optimizer, step, cfg.steps);
        for (Index b = 0; b < cfg.batch_size; ++b) {
            const Index idx = next_index();
            LossBreakdown<float> l = example_loss(model, data.get(idx), regressor, cfg.loss);
            const double total = l.total_value();
            log.vert += l.vert / double(cfg.batch_size);
            log.j3d += l.j3d / double(cfg.batch_size);
            log.j2d += l.j2d / double(cfg.batch_size);
            log.total += total / double(cfg.batch_size);
            if (!std::isfinite(total)) {
                log.total = total;
                dump_non_finite(opts, model, log, idx);
            }
            backward(scale(l.total, inv_batch));
        }
        optimizer.step(log.lr);
        if (csv && step % cfg.log_every == 0) {
            char line[256];
            std::snprintf(line, sizeof line, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long>(step), log.lr, log.vert,
                          log.j3d, log.j2d, log.total);
            csv << line;
        }
        if (opts.on_step) opts.on_step(log);
        result.log.push_back(log);
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

void save_checkpoint(const std::string& dir, const Model& model, const ExperimentConfig& cfg) {
    fs::create_directories(dir);
    Record r;
    r.tensors = model.state();
    r.meta = {{"config", to_json(cfg)}};
    write_record((fs::path(dir) / "checkpoint.rec").string(), r);
    write_json_file((fs::path(dir) / "config.json").string(), to_json(cfg));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    fs::path file = path;
    if (fs::is_directory(file)) file /= "checkpoint.rec";
    const Record r = read_record(file.string());
    if (!r.meta.contains("config")) throw ConfigError("checkpoint '" + file.string() + "' carries no config");
    LoadedCheckpoint out;
    out.config = experiment_from_json(r.meta.at("config"));
    validate(out.config);
    out.model = std::make_unique<Model>(out.config.model, out.config.seed);
    out.model->load_state(r.tensors);
    return out;
}

TrainResult run_training(const ExperimentConfig& cfg) {
    validate(cfg);
    if (cfg.output_dir.empty()) throw ConfigError("train: an output directory is required");
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + cfg.output_dir + "'");
    const auto data = open_dataset(cfg.dataset);
    Model model(cfg.model, cfg.seed);
    write_json_file((fs::path(cfg.output_dir) / "config.json").string(), to_json(cfg));
    TrainOptions opts;
    opts.log_csv = (fs::path(cfg.output_dir) / "train_log.csv").string();
    opts.dump_dir = cfg.output_dir;
    TrainResult result = train(model, *data, cfg, opts);
    save_checkpoint(cfg.output_dir, model, cfg);
    return result;
}

}  // namespace handmesh
