#pragma once

#include "handmesh/ops.hpp"
#include "handmesh/token_generator.hpp"

#include <cmath>
#include <string>

namespace handmesh {

/// 21×778 vertex-to-joint regressor. Rows are convex combinations.
class RegressionMatrix {
   public:
    static constexpr double kRowSumTolerance = 1e-8;

    RegressionMatrix() = default;
    explicit RegressionMatrix(RowMatrix<double> j) : j_(std::move(j)) {
        if (j_.rows() != kNumJoints || j_.cols() != kNumVertices) {
            throw ShapeError("regression matrix must be " + std::to_string(kNumJoints) + "x" +
                             std::to_string(kNumVertices));
        }
        if ((j_.array() < 0).any()) throw std::invalid_argument("regression matrix has negative entries");
        for (Index r = 0; r < j_.rows(); ++r) {
            if (std::abs(j_.row(r).sum() - 1.0) > kRowSumTolerance) {
                throw std::invalid_argument("regression matrix row " + std::to_string(r) + " does not sum to 1");
            }
        }
    }

    const RowMatrix<double>& matrix() const { return j_; }

    template <typename Scalar>
    Var<Scalar> as_constant() const {
        return Var<Scalar>::constant(Tensor<Scalar>::from_matrix(j_));
    }

   private:
    RowMatrix<double> j_;
};

struct LossWeights {
    double j3d = 10.0;
    double j2d = 1.0;
    double vert = 10.0;
};

inline void validate(const LossWeights& w) {
    if (!(w.j3d > 0 && w.j2d > 0 && w.vert > 0)) throw ConfigError("loss weights must all be positive");
}

template <typename Scalar>
struct LossBreakdown {
    Var<Scalar> total;
    double vert = 0;
    double j3d = 0;
    double j2d = 0;
    double total_value() const { return total.value()[0]; }
};

template <typename Scalar>
Var<Scalar> joints_from_vertices(const Var<Scalar>& vertices, const Var<Scalar>& regressor) {
    check_shape(vertices.shape() == Shape{kNumVertices, 3}, "joints_from_vertices", vertices.shape(),
                {kNumVertices, 3});
    return matmul(regressor, vertices);
}

/// L = w_3d·L_J3d + w_2d·L_J2d + w_vert·L_vert, each an elementwise L1 mean.
/// Ground-truth joints are J·V_gt. `regressor` is J as a constant Var.
template <typename Scalar>
LossBreakdown<Scalar> total_loss(const Var<Scalar>& v_pred, const Var<Scalar>& v_gt, const Var<Scalar>& j2d_pred,
                                 const Var<Scalar>& j2d_gt, const Var<Scalar>& regressor, const LossWeights& w) {
    Var<Scalar> j3d_gt;
    {
        NoGradGuard no_grad;
        j3d_gt = joints_from_vertices(v_gt, regressor);
    }
    Var<Scalar> l_vert = l1_mean(v_pred, v_gt);
    Var<Scalar> l_j3d = l1_mean(joints_from_vertices(v_pred, regressor), j3d_gt);
    Var<Scalar> l_j2d = l1_mean(j2d_pred, j2d_gt);
    LossBreakdown<Scalar> out;
    out.vert = l_vert.value()[0];
    out.j3d = l_j3d.value()[0];
    out.j2d = l_j2d.value()[0];
    out.total = add(add(scale(l_j3d, Scalar(w.j3d)), scale(l_j2d, Scalar(w.j2d))), scale(l_vert, Scalar(w.vert)));
    return out;
}

}  // namespace handmesh
