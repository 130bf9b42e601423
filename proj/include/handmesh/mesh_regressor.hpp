#pragma once

#include "handmesh/layers.hpp"
#include "handmesh/token_generator.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace handmesh {

enum class MixerKind { Identity, Attention };

const char* to_string(MixerKind m);
MixerKind parse_mixer_kind(const std::string& s);

/// Cascade layout: layer k reduces channels to c[k], runs n[k] MetaFormer
/// blocks with mixer m[k], then grows the token count to d[k].
struct DecoderConfig {
    std::vector<Index> n{1, 1, 1};
    std::vector<Index> d{84, 336, kNumVertices};
    std::vector<MixerKind> m{MixerKind::Attention, MixerKind::Attention, MixerKind::Attention};
    std::vector<Index> c{256, 128, 64};
    Index heads = 4;
    bool position_embedding = true;
    /// Millimetres per unit of the vertex head's raw output.
    double vertex_unit_mm = 100.0;

    Index layers() const { return static_cast<Index>(d.size()); }
};

/// The three-layer, single-block, attention-mixer cascade 21→84→336→778.
DecoderConfig reference_decoder_config();
/// One layer straight to 778 tokens, identity mixer, channel width `c`.
DecoderConfig baseline_decoder_config(Index channels = 256);

void validate(const DecoderConfig& cfg);

/// Pre-norm residual block: X₁ = X + Mixer(LN(X)); out = X₁ + MLP(LN(X₁)).
template <typename Scalar>
class MetaFormerBlock {
   public:
    static constexpr Index kMlpRatio = 4;

    MetaFormerBlock() = default;
    MetaFormerBlock(Index channels, MixerKind mixer, Index heads, Rng& rng)
        : mixer_(mixer), heads_(heads), norm1_(channels), norm2_(channels) {
        if (mixer == MixerKind::Attention) {
            if (heads < 1 || channels % heads != 0) {
                throw ConfigError("attention mixer: " + std::to_string(channels) +
                                  " channels not divisible by " + std::to_string(heads) + " heads");
            }
            qkv_ = Linear<Scalar>(channels, 3 * channels, rng);
            proj_ = Linear<Scalar>(channels, channels, rng);
        }
        fc1_ = Linear<Scalar>(channels, kMlpRatio * channels, rng);
        fc2_ = Linear<Scalar>(kMlpRatio * channels, channels, rng);
    }

    MixerKind mixer() const { return mixer_; }

    Var<Scalar> mix(const Var<Scalar>& y) const {
        if (mixer_ == MixerKind::Identity) return y;
        return proj_(self_attention(qkv_(y), heads_));
    }

    Var<Scalar> forward(const Var<Scalar>& x) const {
        Var<Scalar> x1 = add(x, mix(norm1_(x)));
        return add(x1, fc2_(gelu(fc1_(norm2_(x1)))));
    }

    Linear<Scalar>& qkv() { return qkv_; }
    Linear<Scalar>& proj() { return proj_; }
    Linear<Scalar>& fc1() { return fc1_; }
    Linear<Scalar>& fc2() { return fc2_; }
    LayerNorm<Scalar>& norm1() { return norm1_; }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        norm1_.collect(prefix + ".norm1", out);
        if (mixer_ == MixerKind::Attention) {
            qkv_.collect(prefix + ".attn.qkv", out);
            proj_.collect(prefix + ".attn.proj", out);
        }
        norm2_.collect(prefix + ".norm2", out);
        fc1_.collect(prefix + ".mlp.fc1", out);
        fc2_.collect(prefix + ".mlp.fc2", out);
    }

   private:
    MixerKind mixer_ = MixerKind::Identity;
    Index heads_ = 1;
    LayerNorm<Scalar> norm1_;
    LayerNorm<Scalar> norm2_;
    Linear<Scalar> qkv_;
    Linear<Scalar> proj_;
    Linear<Scalar> fc1_;
    Linear<Scalar> fc2_;
};

template <typename Scalar>
struct DecoderLayer {
    Linear<Scalar> reduce;          // P_k: C_{k−1} → c_k per token
    Var<Scalar> position_embedding; // N_k × c_k, undefined when disabled
    std::vector<MetaFormerBlock<Scalar>> blocks;
    Var<Scalar> upsample_weight;    // U_k: d_k × N_k
    Var<Scalar> upsample_bias;      // d_k

    Index input_tokens() const { return upsample_weight.shape()[1]; }
    Index output_tokens() const { return upsample_weight.shape()[0]; }
    Index channels() const { return reduce.out_features(); }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        reduce.collect(prefix + ".reduce", out);
        if (position_embedding.defined()) out.push_back({prefix + ".pos_emb", position_embedding});
        for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].collect(prefix + ".block" + std::to_string(b), out);
        out.push_back({prefix + ".upsample.weight", upsample_weight});
        out.push_back({prefix + ".upsample.bias", upsample_bias});
    }
};

template <typename Scalar>
Var<Scalar> dimension_reduce(const Var<Scalar>& x, const DecoderLayer<Scalar>& layer) {
    if (x.shape().size() != 2 || x.shape()[1] != layer.reduce.in_features()) {
        throw ShapeError("dimension_reduce: expected " + std::to_string(layer.reduce.in_features()) +
                         " channels, got " + to_string(x.shape()));
    }
    return layer.reduce(x);
}

template <typename Scalar>
Var<Scalar> add_position_embedding(const Var<Scalar>& x, const Var<Scalar>& embedding) {
    check_shape(x.shape() == embedding.shape(), "add_position_embedding", x.shape(), embedding.shape());
    return add(x, embedding);
}

template <typename Scalar>
Var<Scalar> metaformer_block(const Var<Scalar>& x, const MetaFormerBlock<Scalar>& block) {
    return block.forward(x);
}

template <typename Scalar>
Var<Scalar> upsample_tokens(const Var<Scalar>& x, const DecoderLayer<Scalar>& layer) {
    return token_linear(layer.upsample_weight, x, layer.upsample_bias);
}

template <typename Scalar>
struct MeshOutput {
    Var<Scalar> vertices;  // 778×3, mm, root-relative
    std::vector<Index> token_trace;
    std::vector<Index> channel_trace;
};

/// R = H_{k−1} ∘ … ∘ H_0 followed by a per-token affine vertex head.
template <typename Scalar>
class MeshRegressor {
   public:
    MeshRegressor() = default;
    MeshRegressor(const DecoderConfig& cfg, Index input_tokens, Index input_channels, Rng& rng)
        : cfg_(cfg), input_tokens_(input_tokens), input_channels_(input_channels) {
        validate(cfg);
        Index tokens = input_tokens, channels = input_channels;
        for (Index k = 0; k < cfg.layers(); ++k) {
            DecoderLayer<Scalar> layer;
            const Index ck = cfg.c[k], dk = cfg.d[k];
            layer.reduce = Linear<Scalar>(channels, ck, rng);
            if (cfg.position_embedding) layer.position_embedding = constant_parameter<Scalar>({tokens, ck}, 0.0);
            for (Index b = 0; b < cfg.n[k]; ++b) layer.blocks.emplace_back(ck, cfg.m[k], cfg.heads, rng);
            layer.upsample_weight = uniform_parameter<Scalar>({dk, tokens}, std::sqrt(1.0 / double(tokens)), rng);
            layer.upsample_bias = constant_parameter<Scalar>({dk}, 0.0);
            layers_.push_back(std::move(layer));
            tokens = dk;
            channels = ck;
        }
        head_ = Linear<Scalar>(channels, 3, rng);
    }

    const DecoderConfig& config() const { return cfg_; }
    std::vector<DecoderLayer<Scalar>>& layers() { return layers_; }
    const std::vector<DecoderLayer<Scalar>>& layers() const { return layers_; }
    Linear<Scalar>& head() { return head_; }

    std::vector<Index> expected_token_trace() const {
        std::vector<Index> trace{input_tokens_};
        trace.insert(trace.end(), cfg_.d.begin(), cfg_.d.end());
        return trace;
    }

    MeshOutput<Scalar> forward(const Var<Scalar>& tokens) const {
        check_shape(tokens.shape() == Shape{input_tokens_, input_channels_}, "regress_mesh", tokens.shape(),
                    {input_tokens_, input_channels_});
        MeshOutput<Scalar> out;
        out.token_trace.push_back(tokens.shape()[0]);
        out.channel_trace.push_back(tokens.shape()[1]);
        Var<Scalar> x = tokens;
        for (const auto& layer : layers_) {
            x = dimension_reduce(x, layer);
            if (layer.position_embedding.defined()) x = add_position_embedding(x, layer.position_embedding);
            for (const auto& block : layer.blocks) x = metaformer_block(x, block);
            x = upsample_tokens(x, layer);
            out.token_trace.push_back(x.shape()[0]);
            out.channel_trace.push_back(x.shape()[1]);
        }
        out.vertices = affine(head_(x), Scalar(cfg_.vertex_unit_mm));

        std::vector<Index> channels{input_channels_};
        channels.insert(channels.end(), cfg_.c.begin(), cfg_.c.end());
        if (out.token_trace != expected_token_trace() || out.channel_trace != channels ||
            out.vertices.shape() != Shape{kNumVertices, 3}) {
            throw std::logic_error("regress_mesh: shape trace invariant violated");
        }
        return out;
    }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        for (std::size_t k = 0; k < layers_.size(); ++k) layers_[k].collect(prefix + ".layer" + std::to_string(k), out);
        head_.collect(prefix + ".vertex_head", out);
    }

   private:
    DecoderConfig cfg_;
    Index input_tokens_ = 0;
    Index input_channels_ = 0;
    std::vector<DecoderLayer<Scalar>> layers_;
    Linear<Scalar> head_;
};

template <typename Scalar>
MeshOutput<Scalar> regress_mesh(const Var<Scalar>& tokens, const MeshRegressor<Scalar>& regressor) {
    return regressor.forward(tokens);
}

}  // namespace handmesh
