#pragma once

#include "handmesh/layers.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace handmesh {

inline constexpr Index kNumJoints = 21;
inline constexpr Index kNumVertices = 778;
/// Coarse-mesh sampling uses every 8th template vertex.
inline constexpr Index kCoarseStride = 8;
inline constexpr Index kNumCoarseVertices = (kNumVertices + kCoarseStride - 1) / kCoarseStride;
static_assert(kNumCoarseVertices == 98);

class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

enum class SamplerVariant { Global, Grid, Keypoint, KeypointEnhanced, CoarseMesh };
enum class UpsampleScheme { None, Single4x, Double2x, Extra4x };

struct SamplerConfig {
    SamplerVariant variant = SamplerVariant::Keypoint;
    Index resolution = 28;  // feature-map side for a 224 input: 7, 14 or 28
    UpsampleScheme upsample = UpsampleScheme::Single4x;
};

const char* to_string(SamplerVariant v);
const char* to_string(UpsampleScheme s);
SamplerVariant parse_sampler_variant(const std::string& s);
UpsampleScheme parse_upsample_scheme(const std::string& s);

/// Throws ConfigError when the variant/resolution/scheme triple is inconsistent.
void validate(const SamplerConfig& cfg, Index backbone_resolution = 7);

/// Number of tokens a variant emits on an Hf×Wf map.
Index token_count(SamplerVariant v, Index map_side);

/// Sequence of upsampling factors a scheme applies to go from `from` to `to`.
std::vector<Index> upsample_steps(UpsampleScheme scheme, Index from, Index to);

struct BackboneConfig {
    std::vector<Index> channels{16, 32, 48, 64, 64};
    Index kernel = 3;
};

/// Stand-in image encoder: five stride-2 conv stages with GELU, H/32 output.
template <typename Scalar>
class ToyBackbone {
   public:
    ToyBackbone() = default;
    ToyBackbone(Index input_channels, const BackboneConfig& cfg, Rng& rng) {
        if (cfg.channels.size() != 5) throw ConfigError("backbone: exactly five stages are required");
        Index in = input_channels;
        for (Index out : cfg.channels) {
            stages_.emplace_back(in, out, cfg.kernel, 2, cfg.kernel / 2, rng);
            in = out;
        }
    }

    Index output_channels() const { return stages_.back().weight.shape()[0]; }

    Var<Scalar> forward(const Var<Scalar>& image) const {
        const Shape& s = image.shape();
        if (s.size() != 3 || s[1] % 32 != 0 || s[2] % 32 != 0) {
            throw ShapeError("toy_backbone: spatial dims must be divisible by 32, got " + to_string(s));
        }
        Var<Scalar> x = image;
        for (const auto& stage : stages_) x = gelu(stage(x));
        return x;
    }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        for (std::size_t i = 0; i < stages_.size(); ++i) stages_[i].collect(prefix + ".stage" + std::to_string(i), out);
    }

   private:
    std::vector<Conv2d<Scalar>> stages_;
};

template <typename Scalar>
struct KeypointPrediction {
    Var<Scalar> heatmaps;  // K×Hf×Wf, each map sums to 1
    Var<Scalar> coords;    // K×2 (x, y) in full-image pixels
};

template <typename Scalar>
struct TokenSet {
    Var<Scalar> tokens;  // N×C
    SamplerVariant source_variant = SamplerVariant::Keypoint;
    Index count() const { return tokens.shape()[0]; }
};

/// Maps feature-map pixel coordinates to full-image pixel coordinates
/// (pixel-center convention) and back.
struct PixelScale {
    double image_side = 224;
    double map_side = 7;
    double factor() const { return image_side / map_side; }
    double to_image(double u) const { return (u + 0.5) * factor() - 0.5; }
    double to_map(double x) const { return (x + 0.5) / factor() - 0.5; }
};

/// Spatial softmax + expectation. logits: K×Hf×Wf. Coordinates are returned
/// in full-image pixels for an image of side `image_side`.
template <typename Scalar>
KeypointPrediction<Scalar> soft_argmax(const Var<Scalar>& logits, Index image_side) {
    const Shape& s = logits.shape();
    if (s.size() != 3) throw ShapeError("soft_argmax: expected K×H×W, got " + to_string(s));
    const Index k = s[0], h = s[1], w = s[2];
    if (h != w) throw ShapeError("soft_argmax: square maps only, got " + to_string(s));
    Var<Scalar> probs = softmax(reshape(logits, {k, h * w}), 1);
    Tensor<Scalar> grid({h * w, 2});
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
            grid(y * w + x, 0) = Scalar(x);
            grid(y * w + x, 1) = Scalar(y);
        }
    }
    const PixelScale px{double(image_side), double(w)};
    Var<Scalar> map_coords = matmul(probs, Var<Scalar>::constant(std::move(grid)));
    Var<Scalar> coords = affine(map_coords, Scalar(px.factor()), Scalar(0.5 * px.factor() - 0.5));
    return {reshape(probs, {k, h, w}), coords};
}

struct TokenGeneratorOptions {
    SamplerConfig sampler;
    Index image_side = 224;
    Index backbone_channels = 64;
    Index backbone_resolution = 7;
};

template <typename Scalar>
struct TokenGeneratorOutput {
    Var<Scalar> features;  // F: C×Hf×Wf
    KeypointPrediction<Scalar> keypoints;
    std::optional<KeypointPrediction<Scalar>> coarse;
    TokenSet<Scalar> tokens;
};

/// X_m = T(X_b): optional feature upsampling, 2D keypoint head, sampling.
template <typename Scalar>
class TokenGenerator {
   public:
    TokenGenerator() = default;
    TokenGenerator(const TokenGeneratorOptions& opts, Rng& rng) : opts_(opts) {
        validate(opts.sampler, opts.backbone_resolution);
        const Index c = opts.backbone_channels;
        for (Index factor : upsample_steps(opts.sampler.upsample, opts.backbone_resolution, opts.sampler.resolution)) {
            upsample_.emplace_back(c, c, factor, rng);
            if (opts.sampler.upsample == UpsampleScheme::Extra4x) refine_.emplace_back(c, c, 3, 1, 1, rng);
        }
        keypoint_head_ = Conv2d<Scalar>(c, kNumJoints, 1, 1, 0, rng);
        if (opts.sampler.variant == SamplerVariant::CoarseMesh) {
            coarse_head_ = Conv2d<Scalar>(c, kNumCoarseVertices, 1, 1, 0, rng);
        }
    }

    const SamplerConfig& sampler() const { return opts_.sampler; }
    Index token_count() const { return handmesh::token_count(opts_.sampler.variant, opts_.sampler.resolution); }
    Index channels() const { return opts_.backbone_channels; }

    /// upsample_features: `none` returns X_b itself.
    Var<Scalar> upsample_features(const Var<Scalar>& xb) const {
        Var<Scalar> f = xb;
        for (std::size_t i = 0; i < upsample_.size(); ++i) {
            f = gelu(upsample_[i](f));
            if (!refine_.empty()) f = gelu(refine_[i](f));
        }
        return f;
    }

    KeypointPrediction<Scalar> predict_keypoints_2d(const Var<Scalar>& features) const {
        return soft_argmax(keypoint_head_(features), opts_.image_side);
    }

    TokenSet<Scalar> sample_tokens(const Var<Scalar>& features, const KeypointPrediction<Scalar>& kp,
                                   const KeypointPrediction<Scalar>* coarse = nullptr) const {
        const Shape& s = features.shape();
        if (s.size() != 3 || s[1] != opts_.sampler.resolution || s[2] != opts_.sampler.resolution) {
            throw ShapeError("sample_tokens: " + std::string(to_string(opts_.sampler.variant)) +
                             " expects a " + std::to_string(opts_.sampler.resolution) +
                             "-pixel map, got " + to_string(s));
        }
        const Index c = s[0], side = s[1];
        Var<Scalar> tokens;
        switch (opts_.sampler.variant) {
            case SamplerVariant::Global:
                tokens = spatial_mean(features);
                break;
            case SamplerVariant::Grid:
                tokens = transpose(reshape(features, {c, side * side}));
                break;
            case SamplerVariant::Keypoint:
            case SamplerVariant::KeypointEnhanced:
                tokens = bilinear_sample(features, image_to_map(kp.coords, side));
                break;
            case SamplerVariant::CoarseMesh:
                if (!coarse) throw std::logic_error("sample_tokens: coarse-mesh variant needs coarse coordinates");
                tokens = bilinear_sample(features, image_to_map(coarse->coords, side));
                break;
        }
        TokenSet<Scalar> out{tokens, opts_.sampler.variant};
        if (out.count() != handmesh::token_count(opts_.sampler.variant, side)) {
            throw std::logic_error("sample_tokens: token count law violated");
        }
        return out;
    }

    TokenGeneratorOutput<Scalar> forward(const Var<Scalar>& xb) const {
        TokenGeneratorOutput<Scalar> out;
        out.features = upsample_features(xb);
        out.keypoints = predict_keypoints_2d(out.features);
        if (coarse_head_.weight.defined()) {
            out.coarse = soft_argmax(coarse_head_(out.features), opts_.image_side);
        }
        out.tokens = sample_tokens(out.features, out.keypoints, out.coarse ? &*out.coarse : nullptr);
        return out;
    }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        for (std::size_t i = 0; i < upsample_.size(); ++i) {
            upsample_[i].collect(prefix + ".upsample" + std::to_string(i), out);
            if (!refine_.empty()) refine_[i].collect(prefix + ".refine" + std::to_string(i), out);
        }
        keypoint_head_.collect(prefix + ".keypoint_head", out);
        if (coarse_head_.weight.defined()) coarse_head_.collect(prefix + ".coarse_head", out);
    }

   private:
    Var<Scalar> image_to_map(const Var<Scalar>& image_coords, Index side) const {
        const PixelScale px{double(opts_.image_side), double(side)};
        return affine(image_coords, Scalar(1.0 / px.factor()), Scalar(0.5 / px.factor() - 0.5));
    }

    TokenGeneratorOptions opts_;
    std::vector<TransposedConv2d<Scalar>> upsample_;
    std::vector<Conv2d<Scalar>> refine_;
    Conv2d<Scalar> keypoint_head_;
    Conv2d<Scalar> coarse_head_;
};

}  // namespace handmesh
