#include "handmesh/config.hpp"

#include <fstream>
#include <set>

namespace handmesh {
namespace {

void reject_unknown(const json& j, const char* what, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
    std::set<std::string> keys(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!keys.count(it.key())) throw ConfigError(std::string(what) + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace

json to_json(const SamplerConfig& s) {
    return {{"variant", to_string(s.variant)}, {"resolution", s.resolution}, {"upsample", to_string(s.upsample)}};
}

json to_json(const DecoderConfig& d) {
    json m = json::array();
    for (MixerKind k : d.m) m.push_back(to_string(k));
    return {{"k", d.layers()},  {"n", d.n},         {"d", d.d},
            {"m", m},           {"c", d.c},         {"heads", d.heads},
            {"position_embedding", d.position_embedding}, {"vertex_unit_mm", d.vertex_unit_mm}};
}

json to_json(const ModelConfig& m) {
    return {{"sampler", to_json(m.sampler)},
            {"decoder", to_json(m.decoder)},
            {"backbone", {{"channels", m.backbone.channels}, {"kernel", m.backbone.kernel}}},
            {"input_channels", m.input_channels},
            {"image_side", m.image_side}};
}

json to_json(const DatasetSpec& d) {
    if (!d.procedural()) return d.path;
    if (d.count == 0) return nullptr;
    return {{"count", d.count}, {"seed", d.seed}};
}

json to_json(const ExperimentConfig& c) {
    json j = to_json(c.model);
    j["loss"] = {{"w_3d", c.loss.j3d}, {"w_2d", c.loss.j2d}, {"w_vert", c.loss.vert}};
    j["optimizer"] = {{"lr", c.optimizer.lr},
                      {"weight_decay", c.optimizer.weight_decay},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps},
                      {"drop_factor", c.optimizer.drop_factor},
                      {"drop_at", c.optimizer.drop_at}};
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["dataset"] = to_json(c.dataset);
    j["eval_dataset"] = to_json(c.eval_dataset);
    j["output_dir"] = c.output_dir;
    j["log_every"] = c.log_every;
    j["f_score_mode"] = to_string(c.f_score_mode);
    return j;
}

SamplerConfig sampler_from_json(const json& j, const SamplerConfig& base) {
    reject_unknown(j, "sampler", {"variant", "resolution", "upsample"});
    SamplerConfig s = base;
    if (j.contains("variant")) s.variant = parse_sampler_variant(j.at("variant").get<std::string>());
    read(j, "resolution", s.resolution);
    if (j.contains("upsample")) s.upsample = parse_upsample_scheme(j.at("upsample").get<std::string>());
    return s;
}

DecoderConfig decoder_from_json(const json& j, const DecoderConfig& base) {
    reject_unknown(j, "decoder", {"k", "n", "d", "m", "c", "heads", "position_embedding", "vertex_unit_mm"});
    DecoderConfig d = base;
    read(j, "n", d.n);
    read(j, "d", d.d);
    read(j, "c", d.c);
    read(j, "heads", d.heads);
    read(j, "position_embedding", d.position_embedding);
    read(j, "vertex_unit_mm", d.vertex_unit_mm);
    if (j.contains("m")) {
        d.m.clear();
        for (const auto& s : j.at("m")) d.m.push_back(parse_mixer_kind(s.get<std::string>()));
    }
    if (j.contains("k")) {
        const Index k = j.at("k").get<Index>();
        if (k != d.layers()) {
            throw ConfigError("decoder: k=" + std::to_string(k) + " but d lists " + std::to_string(d.layers()) +
                              " layers");
        }
    }
    return d;
}

ModelConfig model_from_json(const json& j, const ModelConfig& base) {
    ModelConfig m = base;
    if (j.contains("sampler")) m.sampler = sampler_from_json(j.at("sampler"), base.sampler);
    if (j.contains("decoder")) m.decoder = decoder_from_json(j.at("decoder"), base.decoder);
    if (j.contains("backbone")) {
        const json& b = j.at("backbone");
        reject_unknown(b, "backbone", {"channels", "kernel"});
        read(b, "channels", m.backbone.channels);
        read(b, "kernel", m.backbone.kernel);
    }
    read(j, "input_channels", m.input_channels);
    read(j, "image_side", m.image_side);
    return m;
}

DatasetSpec dataset_from_json(const json& j) {
    DatasetSpec d;
    if (j.is_null()) return d;
    if (j.is_string()) {
        d.path = j.get<std::string>();
        return d;
    }
    reject_unknown(j, "dataset", {"count", "seed"});
    read(j, "count", d.count);
    read(j, "seed", d.seed);
    if (d.count < 1) throw ConfigError("procedural dataset needs count >= 1");
    return d;
}

ExperimentConfig experiment_from_json(const json& j, const ExperimentConfig& base) {
    reject_unknown(j, "config",
                   {"sampler", "decoder", "backbone", "input_channels", "image_side", "loss", "optimizer", "steps",
                    "batch_size", "seed", "dataset", "eval_dataset", "output_dir", "log_every", "f_score_mode"});
    ExperimentConfig c = base;
    c.model = model_from_json(j, base.model);
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        reject_unknown(l, "loss", {"w_3d", "w_2d", "w_vert"});
        read(l, "w_3d", c.loss.j3d);
        read(l, "w_2d", c.loss.j2d);
        read(l, "w_vert", c.loss.vert);
    }
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        reject_unknown(o, "optimizer", {"lr", "weight_decay", "beta1", "beta2", "eps", "drop_factor", "drop_at"});
        read(o, "lr", c.optimizer.lr);
        read(o, "weight_decay", c.optimizer.weight_decay);
        read(o, "beta1", c.optimizer.beta1);
        read(o, "beta2", c.optimizer.beta2);
        read(o, "eps", c.optimizer.eps);
        read(o, "drop_factor", c.optimizer.drop_factor);
        read(o, "drop_at", c.optimizer.drop_at);
    }
    read(j, "steps", c.steps);
    read(j, "batch_size", c.batch_size);
    read(j, "seed", c.seed);
    if (j.contains("dataset")) c.dataset = dataset_from_json(j.at("dataset"));
    if (j.contains("eval_dataset")) c.eval_dataset = dataset_from_json(j.at("eval_dataset"));
    read(j, "output_dir", c.output_dir);
    read(j, "log_every", c.log_every);
    if (j.contains("f_score_mode")) c.f_score_mode = parse_f_score_mode(j.at("f_score_mode").get<std::string>());
    return c;
}

void validate(const ExperimentConfig& c) {
    validate(c.model);
    validate(c.loss);
    if (c.steps < 0) throw ConfigError("steps must be >= 0");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.log_every < 1) throw ConfigError("log_every must be >= 1");
    const OptimizerConfig& o = c.optimizer;
    if (!(o.lr > 0) || o.weight_decay < 0 || !(o.beta1 >= 0 && o.beta1 < 1) || !(o.beta2 >= 0 && o.beta2 < 1) ||
        !(o.eps > 0) || !(o.drop_factor > 0) || !(o.drop_at >= 0 && o.drop_at <= 1)) {
        throw ConfigError("optimizer settings out of range");
    }
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

ExperimentConfig load_experiment(const std::string& path) {
    ExperimentConfig c = experiment_from_json(read_json_file(path));
    validate(c);
    return c;
}

}  // namespace handmesh
