#include "handmesh/mesh_regressor.hpp"

namespace handmesh {

const char* to_string(MixerKind m) { return m == MixerKind::Attention ? "attn" : "identity"; }

MixerKind parse_mixer_kind(const std::string& s) {
    if (s == "attn" || s == "attention") return MixerKind::Attention;
    if (s == "identity") return MixerKind::Identity;
    throw ConfigError("unknown mixer '" + s + "'");
}

DecoderConfig reference_decoder_config() { return DecoderConfig{}; }

DecoderConfig baseline_decoder_config(Index channels) {
    DecoderConfig cfg;
    cfg.n = {1};
    cfg.d = {kNumVertices};
    cfg.m = {MixerKind::Identity};
    cfg.c = {channels};
    return cfg;
}

void validate(const DecoderConfig& cfg) {
    const std::size_t k = cfg.d.size();
    if (k == 0) throw ConfigError("decoder: at least one layer is required");
    if (cfg.n.size() != k || cfg.m.size() != k || cfg.c.size() != k) {
        throw ConfigError("decoder: n, d, m and c must all have " + std::to_string(k) + " entries");
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (cfg.n[i] < 1) throw ConfigError("decoder: layer " + std::to_string(i) + " needs at least one block");
        if (cfg.c[i] < 1) throw ConfigError("decoder: channel dims must be positive");
        if (i > 0 && cfg.d[i] <= cfg.d[i - 1]) throw ConfigError("decoder: d must be strictly increasing");
        if (cfg.m[i] == MixerKind::Attention && (cfg.heads < 1 || cfg.c[i] % cfg.heads != 0)) {
            throw ConfigError("decoder: c[" + std::to_string(i) + "]=" + std::to_string(cfg.c[i]) +
                              " not divisible by " + std::to_string(cfg.heads) + " heads");
        }
    }
    if (cfg.d.front() < 1) throw ConfigError("decoder: token counts must be positive");
    if (cfg.d.back() != kNumVertices) {
        throw ConfigError("decoder: last layer must emit " + std::to_string(kNumVertices) + " tokens");
    }
    if (!(cfg.vertex_unit_mm > 0)) throw ConfigError("decoder: vertex unit must be positive");
}

}  // namespace handmesh
