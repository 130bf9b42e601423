#pragma once

#include "handmesh/ops.hpp"
#include "handmesh/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace handmesh {

template <typename Scalar>
struct NamedParameter {
    std::string name;
    Var<Scalar> var;
};

template <typename Scalar>
using ParameterList = std::vector<NamedParameter<Scalar>>;

template <typename Scalar>
Index count_parameters(const ParameterList<Scalar>& params) {
    Index total = 0;
    for (const auto& p : params) total += p.var.size();
    return total;
}

/// Uniform(−bound, bound) leaf, drawn in double so float and double copies of
/// a model built from the same seed agree up to rounding.
template <typename Scalar>
Var<Scalar> uniform_parameter(Shape shape, double bound, Rng& rng) {
    Tensor<Scalar> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    return Var<Scalar>::leaf(std::move(t));
}

template <typename Scalar>
Var<Scalar> constant_parameter(Shape shape, double value) {
    return Var<Scalar>::leaf(Tensor<Scalar>::constant(std::move(shape), static_cast<Scalar>(value)));
}

/// Per-token affine map, weight out×in.
template <typename Scalar>
struct Linear {
    Var<Scalar> weight;
    Var<Scalar> bias;

    Linear() = default;
    Linear(Index in, Index out, Rng& rng)
        : weight(uniform_parameter<Scalar>({out, in}, std::sqrt(1.0 / double(in)), rng)),
          bias(constant_parameter<Scalar>({out}, 0.0)) {}

    Index in_features() const { return weight.shape()[1]; }
    Index out_features() const { return weight.shape()[0]; }

    Var<Scalar> operator()(const Var<Scalar>& x) const { return linear(x, weight, bias); }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename Scalar>
struct LayerNorm {
    Var<Scalar> gamma;
    Var<Scalar> beta;

    LayerNorm() = default;
    explicit LayerNorm(Index channels)
        : gamma(constant_parameter<Scalar>({channels}, 1.0)),
          beta(constant_parameter<Scalar>({channels}, 0.0)) {}

    Var<Scalar> operator()(const Var<Scalar>& x) const { return layer_norm(x, gamma, beta); }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

/// Square-kernel convolution, He-uniform weights, zero bias.
template <typename Scalar>
struct Conv2d {
    Var<Scalar> weight;  // out × in × k × k
    Var<Scalar> bias;
    Index stride = 1;
    Index pad = 0;

    Conv2d() = default;
    Conv2d(Index in, Index out, Index kernel, Index stride_, Index pad_, Rng& rng)
        : weight(uniform_parameter<Scalar>({out, in, kernel, kernel},
                                           std::sqrt(6.0 / double(in * kernel * kernel)), rng)),
          bias(constant_parameter<Scalar>({out}, 0.0)),
          stride(stride_),
          pad(pad_) {}

    Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight, bias, stride, pad); }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

/// Exact stride-fold upsampling: kernel 2·stride, pad stride/2.
template <typename Scalar>
struct TransposedConv2d {
    Var<Scalar> weight;  // in × out × k × k
    Var<Scalar> bias;
    Index stride = 2;

    TransposedConv2d() = default;
    TransposedConv2d(Index in, Index out, Index stride_, Rng& rng)
        : weight(uniform_parameter<Scalar>({in, out, 2 * stride_, 2 * stride_},
                                           // each output pixel sees in·(k/stride)² = 4·in taps
                                           std::sqrt(6.0 / double(4 * in)), rng)),
          bias(constant_parameter<Scalar>({out}, 0.0)),
          stride(stride_) {}

    Var<Scalar> operator()(const Var<Scalar>& x) const {
        return transposed_conv2d(x, weight, bias, stride, stride / 2);
    }

    void collect(const std::string& prefix, ParameterList<Scalar>& out) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

}  // namespace handmesh
