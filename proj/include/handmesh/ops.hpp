#pragma once

#include "handmesh/autograd.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace handmesh {

namespace detail {

template <typename Scalar>
MatrixMap<Scalar> as_matrix(Vector<Scalar>& v, Index rows, Index cols) {
    return MatrixMap<Scalar>(v.data(), rows, cols);
}

template <typename Scalar>
ConstMatrixMap<Scalar> as_matrix(const Vector<Scalar>& v, Index rows, Index cols) {
    return ConstMatrixMap<Scalar>(v.data(), rows, cols);
}

inline void require_rank(const Shape& shape, std::size_t rank, const char* op) {
    if (shape.size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(shape));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    check_shape(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0], "matmul", sa, sb);
    const Index m = sa[0], k = sa[1], n = sb[1];
    Tensor<Scalar> out({m, n});
    out.matrix().noalias() = a.value().matrix() * b.value().matrix();
    return Var<Scalar>::result(std::move(out), {a, b}, "matmul", [m, k, n](Node<Scalar>& self) {
        auto g = detail::as_matrix<Scalar>(std::as_const(self.grad), m, n);
        const auto& A = self.inputs[0];
        const auto& B = self.inputs[1];
        if (auto* ga = grad_target(A)) {
            detail::as_matrix(*ga, m, k).noalias() += g * B->value.matrix().transpose();
        }
        if (auto* gb = grad_target(B)) {
            detail::as_matrix(*gb, k, n).noalias() += A->value.matrix().transpose() * g;
        }
    });
}

/// Per-row affine map: x (N×in), weight (out×in), optional bias (out).
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias = {}) {
    const Shape& sx = x.shape();
    const Shape& sw = weight.shape();
    check_shape(sx.size() == 2 && sw.size() == 2 && sx[1] == sw[1], "linear", sx, sw);
    const Index rows = sx[0], in = sx[1], out_dim = sw[0];
    if (bias.defined()) check_shape(bias.size() == out_dim, "linear bias", sw, bias.shape());
    Tensor<Scalar> out({rows, out_dim});
    out.matrix().noalias() = x.value().matrix() * weight.value().matrix().transpose();
    if (bias.defined()) out.matrix().rowwise() += bias.value().data().transpose();
    std::vector<Var<Scalar>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return Var<Scalar>::result(
        std::move(out), std::move(inputs), "linear", [rows, in, out_dim](Node<Scalar>& self) {
            auto g = detail::as_matrix<Scalar>(std::as_const(self.grad), rows, out_dim);
            const auto& X = self.inputs[0];
            const auto& W = self.inputs[1];
            if (auto* gx = grad_target(X)) {
                detail::as_matrix(*gx, rows, in).noalias() += g * W->value.matrix();
            }
            if (auto* gw = grad_target(W)) {
                detail::as_matrix(*gw, out_dim, in).noalias() += g.transpose() * X->value.matrix();
            }
            if (self.inputs.size() > 2) {
                if (auto* gb = grad_target(self.inputs[2])) *gb += g.colwise().sum().transpose();
            }
        });
}

/// Mixes along the token axis: mixing (d×N) · x (N×c) + bias (d) broadcast over channels.
template <typename Scalar>
Var<Scalar> token_linear(const Var<Scalar>& mixing, const Var<Scalar>& x,
                         const Var<Scalar>& bias = {}) {
    const Shape& su = mixing.shape();
    const Shape& sx = x.shape();
    check_shape(su.size() == 2 && sx.size() == 2 && su[1] == sx[0], "token_linear", su, sx);
    const Index d = su[0], n = su[1], c = sx[1];
    if (bias.defined()) check_shape(bias.size() == d, "token_linear bias", su, bias.shape());
    Tensor<Scalar> out({d, c});
    out.matrix().noalias() = mixing.value().matrix() * x.value().matrix();
    if (bias.defined()) out.matrix().colwise() += bias.value().data();
    std::vector<Var<Scalar>> inputs{mixing, x};
    if (bias.defined()) inputs.push_back(bias);
    return Var<Scalar>::result(
        std::move(out), std::move(inputs), "token_linear", [d, n, c](Node<Scalar>& self) {
            auto g = detail::as_matrix<Scalar>(std::as_const(self.grad), d, c);
            const auto& U = self.inputs[0];
            const auto& X = self.inputs[1];
            if (auto* gu = grad_target(U)) {
                detail::as_matrix(*gu, d, n).noalias() += g * X->value.matrix().transpose();
            }
            if (auto* gx = grad_target(X)) {
                detail::as_matrix(*gx, n, c).noalias() += U->value.matrix().transpose() * g;
            }
            if (self.inputs.size() > 2) {
                if (auto* gb = grad_target(self.inputs[2])) *gb += g.rowwise().sum();
            }
        });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
    detail::require_rank(a.shape(), 2, "transpose");
    const Index r = a.shape()[0], c = a.shape()[1];
    Tensor<Scalar> out({c, r});
    out.matrix() = a.value().matrix().transpose();
    return Var<Scalar>::result(std::move(out), {a}, "transpose", [r, c](Node<Scalar>& self) {
        if (auto* ga = grad_target(self.inputs[0])) {
            detail::as_matrix(*ga, r, c) +=
                detail::as_matrix<Scalar>(std::as_const(self.grad), c, r).transpose();
        }
    });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape shape) {
    Tensor<Scalar> out = a.value().reshaped(std::move(shape));
    return Var<Scalar>::result(std::move(out), {a}, "reshape", [](Node<Scalar>& self) {
        if (auto* ga = grad_target(self.inputs[0])) *ga += self.grad;
    });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
    check_shape(a.shape() == b.shape(), "add", a.shape(), b.shape());
    Tensor<Scalar> out(a.shape(), a.value().data() + b.value().data());
    return Var<Scalar>::result(std::move(out), {a, b}, "add", [](Node<Scalar>& self) {
        for (const auto& in : self.inputs) {
            if (auto* g = grad_target(in)) *g += self.grad;
        }
    });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
    check_shape(a.shape() == b.shape(), "sub", a.shape(), b.shape());
    Tensor<Scalar> out(a.shape(), a.value().data() - b.value().data());
    return Var<Scalar>::result(std::move(out), {a, b}, "sub", [](Node<Scalar>& self) {
        if (auto* g = grad_target(self.inputs[0])) *g += self.grad;
        if (auto* g = grad_target(self.inputs[1])) *g -= self.grad;
    });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
    check_shape(a.shape() == b.shape(), "mul", a.shape(), b.shape());
    Tensor<Scalar> out(a.shape(), a.value().data().cwiseProduct(b.value().data()));
    return Var<Scalar>::result(std::move(out), {a, b}, "mul", [](Node<Scalar>& self) {
        const auto& A = self.inputs[0];
        const auto& B = self.inputs[1];
        if (auto* g = grad_target(A)) *g += self.grad.cwiseProduct(B->value.data());
        if (auto* g = grad_target(B)) *g += self.grad.cwiseProduct(A->value.data());
    });
}

/// a * factor + offset with constant scalars.
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& a, Scalar factor, Scalar offset = Scalar(0)) {
    Tensor<Scalar> out(a.shape(), (a.value().data().array() * factor + offset).matrix());
    return Var<Scalar>::result(std::move(out), {a}, "affine", [factor](Node<Scalar>& self) {
        if (auto* g = grad_target(self.inputs[0])) *g += self.grad * factor;
    });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
    return affine(a, factor);
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
    Tensor<Scalar> out({1});
    out[0] = a.value().data().sum();
    return Var<Scalar>::result(std::move(out), {a}, "sum", [](Node<Scalar>& self) {
        if (auto* g = grad_target(self.inputs[0])) g->array() += self.grad[0];
    });
}

/// Gaussian error linear unit, exact erf form.
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
    constexpr Scalar inv_sqrt2 = Scalar(0.70710678118654752440);
    Tensor<Scalar> out(a.shape());
    const auto x = a.value().data().array();
    out.data().array() = Scalar(0.5) * x * (Scalar(1) + (x * inv_sqrt2).erf());
    return Var<Scalar>::result(std::move(out), {a}, "gelu", [](Node<Scalar>& self) {
        auto* g = grad_target(self.inputs[0]);
        if (!g) return;
        constexpr Scalar inv_sqrt2 = Scalar(0.70710678118654752440);
        constexpr Scalar inv_sqrt2pi = Scalar(0.39894228040143267794);
        const auto x = self.inputs[0]->value.data().array();
        const auto cdf = Scalar(0.5) * (Scalar(1) + (x * inv_sqrt2).erf());
        const auto pdf = inv_sqrt2pi * (Scalar(-0.5) * x.square()).exp();
        g->array() += self.grad.array() * (cdf + x * pdf);
    });
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Softmax along `axis`, max-subtracted.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& a, Index axis) {
    const Shape& s = a.shape();
    if (axis < 0) axis += static_cast<Index>(s.size());
    if (axis < 0 || axis >= static_cast<Index>(s.size())) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         to_string(s));
    }
    Index outer = 1, inner = 1;
    for (Index i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const Index len = s[axis];
    Tensor<Scalar> out(s);
    const Scalar* x = a.value().ptr();
    Scalar* y = out.ptr();
    for (Index o = 0; o < outer; ++o) {
        for (Index in = 0; in < inner; ++in) {
            const Index base = o * len * inner + in;
            Scalar hi = x[base];
            for (Index j = 1; j < len; ++j) hi = std::max(hi, x[base + j * inner]);
            Scalar total = 0;
            for (Index j = 0; j < len; ++j) {
                y[base + j * inner] = std::exp(x[base + j * inner] - hi);
                total += y[base + j * inner];
            }
            for (Index j = 0; j < len; ++j) y[base + j * inner] /= total;
        }
    }
    return Var<Scalar>::result(
        std::move(out), {a}, "softmax", [outer, inner, len](Node<Scalar>& self) {
            auto* g = grad_target(self.inputs[0]);
            if (!g) return;
            const Scalar* y = self.value.ptr();
            const Scalar* dy = self.grad.data();
            for (Index o = 0; o < outer; ++o) {
                for (Index in = 0; in < inner; ++in) {
                    const Index base = o * len * inner + in;
                    Scalar dot = 0;
                    for (Index j = 0; j < len; ++j) dot += dy[base + j * inner] * y[base + j * inner];
                    for (Index j = 0; j < len; ++j) {
                        (*g)[base + j * inner] += y[base + j * inner] * (dy[base + j * inner] - dot);
                    }
                }
            }
        });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last axis, then gamma ⊙ x̂ + beta.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Scalar eps = Scalar(kLayerNormEps)) {
    const Shape& s = x.shape();
    if (s.empty()) throw ShapeError("layer_norm: scalar input");
    const Index c = s.back();
    const Index rows = x.size() / c;
    check_shape(gamma.size() == c && beta.size() == c, "layer_norm", s, gamma.shape());
    Tensor<Scalar> out(s);
    Tensor<Scalar> normalized(s);
    Vector<Scalar> inv_std(rows);
    auto X = detail::as_matrix(x.value().data(), rows, c);
    auto Y = detail::as_matrix(out.data(), rows, c);
    auto N = detail::as_matrix(normalized.data(), rows, c);
    const auto& gm = gamma.value().data();
    const auto& bt = beta.value().data();
    for (Index r = 0; r < rows; ++r) {
        const Scalar mean = X.row(r).mean();
        const Scalar var = (X.row(r).array() - mean).square().mean();
        inv_std[r] = Scalar(1) / std::sqrt(var + eps);
        N.row(r) = (X.row(r).array() - mean) * inv_std[r];
        Y.row(r) = N.row(r).array() * gm.transpose().array() + bt.transpose().array();
    }
    return Var<Scalar>::result(
        std::move(out), {x, gamma, beta}, "layer_norm",
        [rows, c, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node<Scalar>& self) {
            auto G = detail::as_matrix<Scalar>(std::as_const(self.grad), rows, c);
            auto N = detail::as_matrix(normalized.data(), rows, c);
            const auto& gm = self.inputs[1]->value.data();
            if (auto* gx = grad_target(self.inputs[0])) {
                auto GX = detail::as_matrix(*gx, rows, c);
                for (Index r = 0; r < rows; ++r) {
                    const auto dn = (G.row(r).array() * gm.transpose().array()).eval();
                    const Scalar mean_dn = dn.mean();
                    const Scalar mean_dn_n = (dn * N.row(r).array()).mean();
                    GX.row(r).array() += inv_std[r] * (dn - mean_dn - N.row(r).array() * mean_dn_n);
                }
            }
            if (auto* gg = grad_target(self.inputs[1])) {
                *gg += (G.array() * N.array()).colwise().sum().transpose().matrix();
            }
            if (auto* gb = grad_target(self.inputs[2])) *gb += G.colwise().sum().transpose();
        });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Geometry of a square-kernel cross-correlation on a C×H×W map.
struct ConvGeometry {
    Index channels = 0, height = 0, width = 0;
    Index kernel = 1, stride = 1, pad = 0;
    Index out_height = 0, out_width = 0;

    static ConvGeometry make(Index channels, Index height, Index width, Index kernel, Index stride,
                             Index pad) {
        if (kernel < 1 || stride < 1 || pad < 0) {
            throw ShapeError("conv: invalid kernel/stride/pad " + std::to_string(kernel) + "/" +
                             std::to_string(stride) + "/" + std::to_string(pad));
        }
        if (kernel > height + 2 * pad || kernel > width + 2 * pad) {
            throw ShapeError("conv: kernel " + std::to_string(kernel) +
                             " exceeds padded input " + to_string({height, width}));
        }
        ConvGeometry g{channels, height, width, kernel, stride, pad, 0, 0};
        g.out_height = (height + 2 * pad - kernel) / stride + 1;
        g.out_width = (width + 2 * pad - kernel) / stride + 1;
        return g;
    }

    Index patch_size() const { return channels * kernel * kernel; }
    Index out_pixels() const { return out_height * out_width; }
    bool pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

namespace detail {

/// Unfolds x (C×H×W) into columns of shape (C·k·k) × (H'·W').
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Scalar* col) {
    const Index k = g.kernel, s = g.stride, p = g.pad;
    for (Index c = 0; c < g.channels; ++c) {
        const Scalar* plane = x + c * g.height * g.width;
        for (Index ki = 0; ki < k; ++ki) {
            for (Index kj = 0; kj < k; ++kj) {
                Scalar* row = col + ((c * k + ki) * k + kj) * g.out_pixels();
                for (Index oy = 0; oy < g.out_height; ++oy) {
                    const Index iy = oy * s - p + ki;
                    Scalar* dst = row + oy * g.out_width;
                    if (iy < 0 || iy >= g.height) {
                        std::fill(dst, dst + g.out_width, Scalar(0));
                        continue;
                    }
                    const Scalar* src = plane + iy * g.width;
                    for (Index ox = 0; ox < g.out_width; ++ox) {
                        const Index ix = ox * s - p + kj;
                        dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : Scalar(0);
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters columns back onto a C×H×W map (accumulating).
template <typename Scalar>
void col2im(const Scalar* col, const ConvGeometry& g, Scalar* x) {
    const Index k = g.kernel, s = g.stride, p = g.pad;
    for (Index c = 0; c < g.channels; ++c) {
        Scalar* plane = x + c * g.height * g.width;
        for (Index ki = 0; ki < k; ++ki) {
            for (Index kj = 0; kj < k; ++kj) {
                const Scalar* row = col + ((c * k + ki) * k + kj) * g.out_pixels();
                for (Index oy = 0; oy < g.out_height; ++oy) {
                    const Index iy = oy * s - p + ki;
                    if (iy < 0 || iy >= g.height) continue;
                    const Scalar* src = row + oy * g.out_width;
                    Scalar* dst = plane + iy * g.width;
                    for (Index ox = 0; ox < g.out_width; ++ox) {
                        const Index ix = ox * s - p + kj;
                        if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// Cross-correlation. x: C_in×H×W, weight: C_out×C_in×k×k, bias: C_out (optional).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Index stride, Index pad) {
    const Shape& sx = x.shape();
    const Shape& sw = weight.shape();
    detail::require_rank(sx, 3, "conv2d input");
    detail::require_rank(sw, 4, "conv2d weight");
    check_shape(sw[1] == sx[0] && sw[2] == sw[3], "conv2d", sx, sw);
    const ConvGeometry g = ConvGeometry::make(sx[0], sx[1], sx[2], sw[2], stride, pad);
    const Index c_out = sw[0];
    if (bias.defined()) check_shape(bias.size() == c_out, "conv2d bias", sw, bias.shape());

    Vector<Scalar> col;
    if (!g.pointwise()) {
        col.resize(g.patch_size() * g.out_pixels());
        detail::im2col(x.value().ptr(), g, col.data());
    }
    Tensor<Scalar> out({c_out, g.out_height, g.out_width});
    auto W = detail::as_matrix(weight.value().data(), c_out, g.patch_size());
    auto Y = detail::as_matrix(out.data(), c_out, g.out_pixels());
    if (g.pointwise()) {
        Y.noalias() = W * detail::as_matrix(x.value().data(), g.channels, g.out_pixels());
    } else {
        Y.noalias() = W * detail::as_matrix<Scalar>(std::as_const(col), g.patch_size(), g.out_pixels());
    }
    if (bias.defined()) Y.colwise() += bias.value().data();

    std::vector<Var<Scalar>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return Var<Scalar>::result(
        std::move(out), std::move(inputs), "conv2d",
        [g, c_out, col = std::move(col)](Node<Scalar>& self) {
            auto G = detail::as_matrix<Scalar>(std::as_const(self.grad), c_out, g.out_pixels());
            const auto& X = self.inputs[0];
            const auto& Wn = self.inputs[1];
            if (auto* gw = grad_target(Wn)) {
                auto GW = detail::as_matrix(*gw, c_out, g.patch_size());
                if (g.pointwise()) {
                    GW.noalias() += G * X->value.matrix().transpose();
                } else {
                    GW.noalias() += G * detail::as_matrix(col, g.patch_size(), g.out_pixels()).transpose();
                }
            }
            if (auto* gx = grad_target(X)) {
                auto W = detail::as_matrix(Wn->value.data(), c_out, g.patch_size());
                if (g.pointwise()) {
                    detail::as_matrix(*gx, g.channels, g.out_pixels()).noalias() += W.transpose() * G;
                } else {
                    RowMatrix<Scalar> dcol = W.transpose() * G;
                    detail::col2im(dcol.data(), g, gx->data());
                }
            }
            if (self.inputs.size() > 2) {
                if (auto* gb = grad_target(self.inputs[2])) *gb += G.rowwise().sum();
            }
        });
}

/// Transposed convolution (adjoint of conv2d with the same kernel/stride/pad).
/// x: C_in×H×W, weight: C_in×C_out×k×k. Only geometries yielding exactly
/// stride× spatial upsampling (k − 2·pad == stride) are accepted.
template <typename Scalar>
Var<Scalar> transposed_conv2d(const Var<Scalar>& x, const Var<Scalar>& weight,
                              const Var<Scalar>& bias, Index stride, Index pad) {
    const Shape& sx = x.shape();
    const Shape& sw = weight.shape();
    detail::require_rank(sx, 3, "transposed_conv2d input");
    detail::require_rank(sw, 4, "transposed_conv2d weight");
    check_shape(sw[0] == sx[0] && sw[2] == sw[3], "transposed_conv2d", sx, sw);
    const Index k = sw[2];
    if (stride < 2 || pad < 0 || k - 2 * pad != stride) {
        throw ShapeError("transposed_conv2d: kernel " + std::to_string(k) + ", stride " +
                         std::to_string(stride) + ", pad " + std::to_string(pad) +
                         " does not give exact stride-fold upsampling");
    }
    const Index c_in = sx[0], h = sx[1], w = sx[2], c_out = sw[1];
    // Geometry of the forward conv that maps the upsampled map back to x.
    const ConvGeometry g = ConvGeometry::make(c_out, h * stride, w * stride, k, stride, pad);
    if (bias.defined()) check_shape(bias.size() == c_out, "transposed_conv2d bias", sw, bias.shape());

    auto W = detail::as_matrix(weight.value().data(), c_in, g.patch_size());
    RowMatrix<Scalar> col = W.transpose() * detail::as_matrix(x.value().data(), c_in, h * w);
    Tensor<Scalar> out({c_out, g.height, g.width});
    detail::col2im(col.data(), g, out.ptr());
    if (bias.defined()) {
        detail::as_matrix(out.data(), c_out, g.height * g.width).colwise() += bias.value().data();
    }

    std::vector<Var<Scalar>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return Var<Scalar>::result(
        std::move(out), std::move(inputs), "transposed_conv2d",
        [g, c_in, c_out](Node<Scalar>& self) {
            const auto& X = self.inputs[0];
            const auto& Wn = self.inputs[1];
            const Index hw = g.out_pixels();
            RowMatrix<Scalar> dcol(g.patch_size(), hw);
            detail::im2col(self.grad.data(), g, dcol.data());
            if (auto* gx = grad_target(X)) {
                detail::as_matrix(*gx, c_in, hw).noalias() +=
                    detail::as_matrix(Wn->value.data(), c_in, g.patch_size()) * dcol;
            }
            if (auto* gw = grad_target(Wn)) {
                detail::as_matrix(*gw, c_in, g.patch_size()).noalias() +=
                    detail::as_matrix(X->value.data(), c_in, hw) * dcol.transpose();
            }
            if (self.inputs.size() > 2) {
                if (auto* gb = grad_target(self.inputs[2])) {
                    *gb += detail::as_matrix<Scalar>(std::as_const(self.grad), c_out,
                                                     g.height * g.width)
                               .rowwise()
                               .sum();
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Sampling and pooling
// ---------------------------------------------------------------------------

/// Bilinear interpolation of map (C×H×W) at continuous (x, y) pixel
/// coordinates (N×2). Coordinates are clamped into the map first.
/// Returns N×C.
template <typename Scalar>
Var<Scalar> bilinear_sample(const Var<Scalar>& map, const Var<Scalar>& coords) {
    const Shape& sm = map.shape();
    const Shape& sc = coords.shape();
    detail::require_rank(sm, 3, "bilinear_sample map");
    check_shape(sc.size() == 2 && sc[1] == 2, "bilinear_sample coords", sc, {sc.empty() ? 0 : sc[0], 2});
    const Index channels = sm[0], h = sm[1], w = sm[2], n = sc[0];

    struct Corner {
        Index x0, x1, y0, y1;
        Scalar wx, wy;
        bool inside_x, inside_y;
    };
    std::vector<Corner> corners(static_cast<std::size_t>(n));
    const Tensor<Scalar>& cv = coords.value();
    for (Index i = 0; i < n; ++i) {
        const Scalar raw_x = cv(i, 0), raw_y = cv(i, 1);
        const Scalar x = std::clamp(raw_x, Scalar(0), Scalar(w - 1));
        const Scalar y = std::clamp(raw_y, Scalar(0), Scalar(h - 1));
        Corner& c = corners[static_cast<std::size_t>(i)];
        c.x0 = std::min<Index>(static_cast<Index>(std::floor(x)), std::max<Index>(w - 2, 0));
        c.y0 = std::min<Index>(static_cast<Index>(std::floor(y)), std::max<Index>(h - 2, 0));
        c.x1 = std::min<Index>(c.x0 + 1, w - 1);
        c.y1 = std::min<Index>(c.y0 + 1, h - 1);
        c.wx = x - Scalar(c.x0);
        c.wy = y - Scalar(c.y0);
        c.inside_x = raw_x >= Scalar(0) && raw_x <= Scalar(w - 1);
        c.inside_y = raw_y >= Scalar(0) && raw_y <= Scalar(h - 1);
    }

    const Tensor<Scalar>& mv = map.value();
    Tensor<Scalar> out({n, channels});
    for (Index i = 0; i < n; ++i) {
        const Corner& c = corners[static_cast<std::size_t>(i)];
        const Scalar w00 = (1 - c.wx) * (1 - c.wy), w01 = c.wx * (1 - c.wy);
        const Scalar w10 = (1 - c.wx) * c.wy, w11 = c.wx * c.wy;
        for (Index ch = 0; ch < channels; ++ch) {
            out(i, ch) = w00 * mv(ch, c.y0, c.x0) + w01 * mv(ch, c.y0, c.x1) +
                         w10 * mv(ch, c.y1, c.x0) + w11 * mv(ch, c.y1, c.x1);
        }
    }

    return Var<Scalar>::result(
        std::move(out), {map, coords}, "bilinear_sample",
        [channels, h, w, n, corners = std::move(corners)](Node<Scalar>& self) {
            const auto& M = self.inputs[0];
            const auto& C = self.inputs[1];
            auto* gm = grad_target(M);
            auto* gc = grad_target(C);
            const Scalar* g = self.grad.data();
            const Tensor<Scalar>& mv = M->value;
            auto at = [h, w](Index ch, Index y, Index x) { return (ch * h + y) * w + x; };
            for (Index i = 0; i < n; ++i) {
                const Corner& c = corners[static_cast<std::size_t>(i)];
                const Scalar w00 = (1 - c.wx) * (1 - c.wy), w01 = c.wx * (1 - c.wy);
                const Scalar w10 = (1 - c.wx) * c.wy, w11 = c.wx * c.wy;
                Scalar dx = 0, dy = 0;
                for (Index ch = 0; ch < channels; ++ch) {
                    const Scalar go = g[i * channels + ch];
                    if (gm) {
                        (*gm)[at(ch, c.y0, c.x0)] += w00 * go;
                        (*gm)[at(ch, c.y0, c.x1)] += w01 * go;
                        (*gm)[at(ch, c.y1, c.x0)] += w10 * go;
                        (*gm)[at(ch, c.y1, c.x1)] += w11 * go;
                    }
                    if (gc) {
                        const Scalar v00 = mv(ch, c.y0, c.x0), v01 = mv(ch, c.y0, c.x1);
                        const Scalar v10 = mv(ch, c.y1, c.x0), v11 = mv(ch, c.y1, c.x1);
                        dx += go * ((1 - c.wy) * (v01 - v00) + c.wy * (v11 - v10));
                        dy += go * ((1 - c.wx) * (v10 - v00) + c.wx * (v11 - v01));
                    }
                }
                if (gc) {
                    if (c.inside_x) (*gc)[i * 2] += dx;
                    if (c.inside_y) (*gc)[i * 2 + 1] += dy;
                }
            }
        });
}

/// Mean over the spatial axes of a C×H×W map, returned as a 1×C token.
template <typename Scalar>
Var<Scalar> spatial_mean(const Var<Scalar>& map) {
    detail::require_rank(map.shape(), 3, "spatial_mean");
    const Index channels = map.shape()[0];
    const Index pixels = map.shape()[1] * map.shape()[2];
    Tensor<Scalar> out({1, channels});
    out.matrix() = detail::as_matrix(map.value().data(), channels, pixels).rowwise().mean().transpose();
    return Var<Scalar>::result(std::move(out), {map}, "spatial_mean", [channels, pixels](Node<Scalar>& self) {
        if (auto* g = grad_target(self.inputs[0])) {
            auto G = detail::as_matrix(*g, channels, pixels);
            for (Index ch = 0; ch < channels; ++ch) G.row(ch).array() += self.grad[ch] / Scalar(pixels);
        }
    });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Multi-head scaled dot-product self-attention core.
/// qkv: N×3c laid out as [Q | K | V], each split into `heads` contiguous
/// slices of width c/heads. Returns the concatenated head outputs, N×c.
template <typename Scalar>
Var<Scalar> self_attention(const Var<Scalar>& qkv, Index heads) {
    const Shape& s = qkv.shape();
    detail::require_rank(s, 2, "self_attention");
    if (s[1] % 3 != 0) throw ShapeError("self_attention: width not divisible by 3 in " + to_string(s));
    const Index n = s[0], c = s[1] / 3;
    if (heads < 1 || c % heads != 0) {
        throw ShapeError("self_attention: channels " + std::to_string(c) +
                         " not divisible by heads " + std::to_string(heads));
    }
    const Index dh = c / heads;
    const Scalar inv_scale = Scalar(1) / std::sqrt(Scalar(dh));
    auto QKV = qkv.value().matrix();
    Tensor<Scalar> out({n, c});
    auto O = out.matrix();
    std::vector<RowMatrix<Scalar>> probs(static_cast<std::size_t>(heads));
    for (Index hd = 0; hd < heads; ++hd) {
        RowMatrix<Scalar> scores = (QKV.middleCols(hd * dh, dh) * QKV.middleCols(c + hd * dh, dh).transpose()) * inv_scale;
        for (Index r = 0; r < n; ++r) {
            const Scalar hi = scores.row(r).maxCoeff();
            scores.row(r) = (scores.row(r).array() - hi).exp();
            scores.row(r) /= scores.row(r).sum();
        }
        O.middleCols(hd * dh, dh).noalias() = scores * QKV.middleCols(2 * c + hd * dh, dh);
        probs[static_cast<std::size_t>(hd)] = std::move(scores);
    }
    return Var<Scalar>::result(
        std::move(out), {qkv}, "self_attention",
        [n, c, dh, heads, inv_scale, probs = std::move(probs)](Node<Scalar>& self) {
            auto* g = grad_target(self.inputs[0]);
            if (!g) return;
            auto QKV = self.inputs[0]->value.matrix();
            auto G = detail::as_matrix<Scalar>(std::as_const(self.grad), n, c);
            auto GQKV = detail::as_matrix(*g, n, 3 * c);
            for (Index hd = 0; hd < heads; ++hd) {
                const RowMatrix<Scalar>& P = probs[static_cast<std::size_t>(hd)];
                const auto dO = G.middleCols(hd * dh, dh);
                RowMatrix<Scalar> dP = dO * QKV.middleCols(2 * c + hd * dh, dh).transpose();
                GQKV.middleCols(2 * c + hd * dh, dh).noalias() += P.transpose() * dO;
                const Vector<Scalar> row_dot = (dP.array() * P.array()).rowwise().sum();
                RowMatrix<Scalar> dS = (P.array() * (dP.colwise() - row_dot).array()).matrix() * inv_scale;
                GQKV.middleCols(hd * dh, dh).noalias() += dS * QKV.middleCols(c + hd * dh, dh);
                GQKV.middleCols(c + hd * dh, dh).noalias() += dS.transpose() * QKV.middleCols(hd * dh, dh);
            }
        });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean absolute difference over all elements. Subgradient at ties is 0.
template <typename Scalar>
Var<Scalar> l1_mean(const Var<Scalar>& pred, const Var<Scalar>& target) {
    check_shape(pred.shape() == target.shape(), "l1_mean", pred.shape(), target.shape());
    const Index count = pred.size();
    Tensor<Scalar> out({1});
    out[0] = (pred.value().data() - target.value().data()).cwiseAbs().sum() / Scalar(count);
    return Var<Scalar>::result(std::move(out), {pred, target}, "l1_mean", [count](Node<Scalar>& self) {
        const auto& P = self.inputs[0]->value.data();
        const auto& T = self.inputs[1]->value.data();
        const Scalar g = self.grad[0] / Scalar(count);
        auto sign = [](Scalar v) { return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0)); };
        auto* gp = grad_target(self.inputs[0]);
        auto* gt = grad_target(self.inputs[1]);
        for (Index i = 0; i < count; ++i) {
            const Scalar d = sign(P[i] - T[i]) * g;
            if (gp) (*gp)[i] += d;
            if (gt) (*gt)[i] -= d;
        }
    });
}

}  // namespace handmesh
