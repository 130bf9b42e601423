#pragma once

#include "handmesh/mesh_regressor.hpp"
#include "handmesh/token_generator.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace handmesh {

inline constexpr Index kInputChannels = kNumJoints + 1;  // heatmaps + silhouette

struct ModelConfig {
    SamplerConfig sampler;
    DecoderConfig decoder;
    BackboneConfig backbone;
    Index input_channels = kInputChannels;
    Index image_side = 224;

    Index backbone_resolution() const { return image_side / 32; }
};

void validate(const ModelConfig& cfg);

template <typename Scalar>
struct ModelOutput {
    TokenGeneratorOutput<Scalar> tokens;
    MeshOutput<Scalar> mesh;

    const Var<Scalar>& vertices() const { return mesh.vertices; }
    const Var<Scalar>& keypoints_2d() const { return tokens.keypoints.coords; }
};

struct ParameterSplit {
    Index backbone = 0;
    Index token_generator = 0;
    Index regressor = 0;
    Index non_backbone() const { return token_generator + regressor; }
    Index total() const { return backbone + non_backbone(); }
};

/// Backbone → token generator → mesh regressor. Each module draws its initial
/// weights from its own substream of `seed`.
template <typename Scalar>
class HandMeshModel {
   public:
    HandMeshModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        validate(cfg);
        Rng backbone_rng = Rng::substream(seed, "init/backbone");
        Rng generator_rng = Rng::substream(seed, "init/token_generator");
        Rng regressor_rng = Rng::substream(seed, "init/regressor");
        backbone_ = ToyBackbone<Scalar>(cfg.input_channels, cfg.backbone, backbone_rng);
        TokenGeneratorOptions opts;
        opts.sampler = cfg.sampler;
        opts.image_side = cfg.image_side;
        opts.backbone_channels = backbone_.output_channels();
        opts.backbone_resolution = cfg.backbone_resolution();
        generator_ = TokenGenerator<Scalar>(opts, generator_rng);
        regressor_ = MeshRegressor<Scalar>(cfg.decoder, generator_.token_count(), generator_.channels(),
                                           regressor_rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const ToyBackbone<Scalar>& backbone() const { return backbone_; }
    const TokenGenerator<Scalar>& token_generator() const { return generator_; }
    const MeshRegressor<Scalar>& regressor() const { return regressor_; }
    MeshRegressor<Scalar>& regressor() { return regressor_; }

    ModelOutput<Scalar> forward(const Var<Scalar>& input) const {
        ModelOutput<Scalar> out;
        out.tokens = generator_.forward(backbone_.forward(input));
        out.mesh = regressor_.forward(out.tokens.tokens.tokens);
        return out;
    }

    ModelOutput<Scalar> forward(const Tensor<Scalar>& input) const {
        return forward(Var<Scalar>::constant(input));
    }

    /// Stable, uniquely named list of every trainable leaf.
    ParameterList<Scalar> parameters() const {
        ParameterList<Scalar> out;
        backbone_.collect("backbone", out);
        generator_.collect("token_generator", out);
        regressor_.collect("regressor", out);
        return out;
    }

    ParameterSplit parameter_split() const {
        ParameterList<Scalar> b, g, r;
        backbone_.collect("backbone", b);
        generator_.collect("token_generator", g);
        regressor_.collect("regressor", r);
        return {count_parameters(b), count_parameters(g), count_parameters(r)};
    }

    void zero_grad() const {
        for (auto& p : parameters()) p.var.zero_grad();
    }

    std::map<std::string, Tensor<Scalar>> state() const {
        std::map<std::string, Tensor<Scalar>> out;
        for (const auto& p : parameters()) out.emplace(p.name, p.var.value());
        return out;
    }

    /// Copies named values into the parameters; every name and shape must match.
    void load_state(const std::map<std::string, Tensor<Scalar>>& values) {
        auto params = parameters();
        if (values.size() != params.size()) {
            throw ConfigError("checkpoint has " + std::to_string(values.size()) + " tensors, model expects " +
                              std::to_string(params.size()));
        }
        for (auto& p : params) {
            auto it = values.find(p.name);
            if (it == values.end()) throw ConfigError("checkpoint is missing '" + p.name + "'");
            if (it->second.shape() != p.var.shape()) {
                throw ConfigError("checkpoint tensor '" + p.name + "' has shape " + to_string(it->second.shape()) +
                                  ", model expects " + to_string(p.var.shape()));
            }
            p.var.mutable_value() = it->second;
        }
    }

   private:
    ModelConfig cfg_;
    ToyBackbone<Scalar> backbone_;
    TokenGenerator<Scalar> generator_;
    MeshRegressor<Scalar> regressor_;
};

}  // namespace handmesh
