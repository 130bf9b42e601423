#include "handmesh/token_generator.hpp"

namespace handmesh {

const char* to_string(SamplerVariant v) {
    switch (v) {
        case SamplerVariant::Global: return "global";
        case SamplerVariant::Grid: return "grid";
        case SamplerVariant::Keypoint: return "keypoint";
        case SamplerVariant::KeypointEnhanced: return "keypoint-enhanced";
        case SamplerVariant::CoarseMesh: return "coarse-mesh";
    }
    return "?";
}

const char* to_string(UpsampleScheme s) {
    switch (s) {
        case UpsampleScheme::None: return "none";
        case UpsampleScheme::Single4x: return "single-4x";
        case UpsampleScheme::Double2x: return "double-2x";
        case UpsampleScheme::Extra4x: return "4x-with-extra-convs";
    }
    return "?";
}

SamplerVariant parse_sampler_variant(const std::string& s) {
    for (auto v : {SamplerVariant::Global, SamplerVariant::Grid, SamplerVariant::Keypoint,
                   SamplerVariant::KeypointEnhanced, SamplerVariant::CoarseMesh}) {
        if (s == to_string(v)) return v;
    }
    throw ConfigError("unknown sampler variant '" + s + "'");
}

UpsampleScheme parse_upsample_scheme(const std::string& s) {
    for (auto v : {UpsampleScheme::None, UpsampleScheme::Single4x, UpsampleScheme::Double2x,
                   UpsampleScheme::Extra4x}) {
        if (s == to_string(v)) return v;
    }
    throw ConfigError("unknown upsample scheme '" + s + "'");
}

Index token_count(SamplerVariant v, Index map_side) {
    switch (v) {
        case SamplerVariant::Global: return 1;
        case SamplerVariant::Grid: return map_side * map_side;
        case SamplerVariant::Keypoint:
        case SamplerVariant::KeypointEnhanced: return kNumJoints;
        case SamplerVariant::CoarseMesh: return kNumCoarseVertices;
    }
    return 0;
}

std::vector<Index> upsample_steps(UpsampleScheme scheme, Index from, Index to) {
    if (scheme == UpsampleScheme::None) {
        if (from != to) throw ConfigError("upsample scheme none cannot change resolution");
        return {};
    }
    if (scheme == UpsampleScheme::Single4x) {
        if (to != 4 * from) throw ConfigError("single-4x requires target = 4 × backbone resolution");
        return {4};
    }
    std::vector<Index> steps;
    for (Index side = from; side < to; side *= 2) steps.push_back(2);
    if (steps.empty() || (from << steps.size()) != to) {
        throw ConfigError(std::string(to_string(scheme)) + " cannot reach resolution " + std::to_string(to) +
                          " from " + std::to_string(from));
    }
    return steps;
}

void validate(const SamplerConfig& cfg, Index backbone_resolution) {
    const std::string name = to_string(cfg.variant);
    if (cfg.resolution != 7 && cfg.resolution != 14 && cfg.resolution != 28) {
        throw ConfigError("sampler resolution must be 7, 14 or 28, got " + std::to_string(cfg.resolution));
    }
    switch (cfg.variant) {
        case SamplerVariant::Global:
        case SamplerVariant::Grid:
            if (cfg.resolution != backbone_resolution || cfg.upsample != UpsampleScheme::None) {
                throw ConfigError(name + " sampling requires resolution " + std::to_string(backbone_resolution) +
                                  " and upsample scheme none");
            }
            return;
        case SamplerVariant::KeypointEnhanced:
            if (cfg.upsample != UpsampleScheme::Extra4x) {
                throw ConfigError("keypoint-enhanced sampling requires the 4x-with-extra-convs scheme");
            }
            break;
        case SamplerVariant::Keypoint:
        case SamplerVariant::CoarseMesh:
            break;
    }
    if (cfg.resolution > backbone_resolution && cfg.upsample == UpsampleScheme::None) {
        throw ConfigError(name + " at resolution " + std::to_string(cfg.resolution) + " requires upsampling");
    }
    upsample_steps(cfg.upsample, backbone_resolution, cfg.resolution);
}

}  // namespace handmesh
