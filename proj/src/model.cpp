#include "handmesh/model.hpp"

namespace handmesh {

void validate(const ModelConfig& cfg) {
    if (cfg.image_side < 32 || cfg.image_side % 32 != 0) {
        throw ConfigError("image side must be a positive multiple of 32, got " + std::to_string(cfg.image_side));
    }
    if (cfg.input_channels < 1) throw ConfigError("input channel count must be positive");
    validate(cfg.sampler, cfg.backbone_resolution());
    validate(cfg.decoder);
}

}  // namespace handmesh
