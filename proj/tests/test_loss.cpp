#include "handmesh/loss.hpp"
#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace handmesh;
using handmesh::testing::gradcheck;
using handmesh::testing::random_tensor;
using handmesh::testing::relative_error;

namespace {

using V = Var<double>;
using T = Tensor<double>;

RowMatrix<double> random_regressor(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RowMatrix<double> j(kNumJoints, kNumVertices);
    for (Index r = 0; r < j.rows(); ++r) {
        for (Index c = 0; c < j.cols(); ++c) j(r, c) = u(gen) < 0.05 ? u(gen) : 0.0;
        j(r, r * 37) += 0.5;
        j.row(r) /= j.row(r).sum();
    }
    return j;
}

RowMatrix<double> one_hot_regressor(const std::vector<Index>& vertex_of_joint) {
    RowMatrix<double> j = RowMatrix<double>::Zero(kNumJoints, kNumVertices);
    for (Index r = 0; r < kNumJoints; ++r) j(r, vertex_of_joint[std::size_t(r)]) = 1.0;
    return j;
}

}  // namespace

TEST(RegressionMatrix, RejectsInvalidMatrices) {
    RowMatrix<double> j = one_hot_regressor(std::vector<Index>(21, 0));
    EXPECT_NO_THROW(RegressionMatrix{j});
    RowMatrix<double> bad_sum = j;
    bad_sum(3, 5) = 1e-6;
    EXPECT_THROW(RegressionMatrix{bad_sum}, std::invalid_argument);
    RowMatrix<double> negative = j;
    negative(2, 0) = 1.5;
    negative(2, 1) = -0.5;
    EXPECT_THROW(RegressionMatrix{negative}, std::invalid_argument);
    EXPECT_THROW(RegressionMatrix{RowMatrix<double>::Constant(21, 100, 0.01)}, ShapeError);
}

TEST(JointsFromVertices, OneHotRowsSelectVertices) {
    std::vector<Index> pick;
    for (Index r = 0; r < kNumJoints; ++r) pick.push_back((r * 131) % kNumVertices);
    RegressionMatrix j(one_hot_regressor(pick));
    std::mt19937_64 gen(1);
    T v = random_tensor({kNumVertices, 3}, gen, -100, 100);
    V joints = joints_from_vertices(V::constant(v), j.as_constant<double>());
    for (Index r = 0; r < kNumJoints; ++r)
        for (Index c = 0; c < 3; ++c) EXPECT_EQ(joints.value()(r, c), v(pick[std::size_t(r)], c));
}

TEST(JointsFromVertices, TranslationEquivariance) {
    std::mt19937_64 gen(2);
    RegressionMatrix j(random_regressor(gen));
    T v = random_tensor({kNumVertices, 3}, gen, -100, 100);
    const double t[3] = {12.5, -40.0, 3.25};
    T shifted = v;
    for (Index r = 0; r < kNumVertices; ++r)
        for (Index c = 0; c < 3; ++c) shifted(r, c) += t[c];
    T a = joints_from_vertices(V::constant(v), j.as_constant<double>()).value();
    T b = joints_from_vertices(V::constant(shifted), j.as_constant<double>()).value();
    for (Index r = 0; r < kNumJoints; ++r)
        for (Index c = 0; c < 3; ++c) EXPECT_LT(relative_error(b(r, c), a(r, c) + t[c], 1e-12), 1e-10);
}

TEST(JointsFromVertices, MatchesMatmulOracle) {
    std::mt19937_64 gen(3);
    RegressionMatrix j(random_regressor(gen));
    T v = random_tensor({kNumVertices, 3}, gen, -100, 100);
    T out = joints_from_vertices(V::constant(v), j.as_constant<double>()).value();
    for (Index r = 0; r < kNumJoints; ++r)
        for (Index c = 0; c < 3; ++c) {
            double acc = 0;
            for (Index k = 0; k < kNumVertices; ++k) acc += j.matrix()(r, k) * v(k, c);
            EXPECT_LT(relative_error(out(r, c), acc, 1e-12), 1e-12);
        }
}

TEST(JointsFromVertices, RejectsWrongShape) {
    std::mt19937_64 gen(4);
    RegressionMatrix j(random_regressor(gen));
    EXPECT_THROW(joints_from_vertices(V::constant(T({777, 3})), j.as_constant<double>()), ShapeError);
}

TEST(L1Mean, ZeroOnEqualInputs) {
    std::mt19937_64 gen(5);
    T a = random_tensor({21, 3}, gen);
    EXPECT_EQ(l1_mean(V::constant(a), V::constant(a)).value()[0], 0.0);
}

TEST(L1Mean, SingleOffsetElementAmongSixtyThree) {
    std::mt19937_64 gen(6);
    T a = random_tensor({21, 3}, gen);
    T b = a;
    b(7, 2) += 0.63;
    EXPECT_NEAR(l1_mean(V::constant(a), V::constant(b)).value()[0], 0.63 / 63.0, 1e-15);
}

TEST(L1Mean, MatchesDirectSum) {
    std::mt19937_64 gen(7);
    T a = random_tensor({40, 3}, gen), b = random_tensor({40, 3}, gen);
    double acc = 0;
    for (Index i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    EXPECT_LT(relative_error(l1_mean(V::constant(a), V::constant(b)).value()[0], acc / 120.0), 1e-12);
}

TEST(L1Mean, TriangleInequalityOnRandomTriples) {
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 50; ++trial) {
        V a = V::constant(random_tensor({21, 3}, gen)), b = V::constant(random_tensor({21, 3}, gen)),
          c = V::constant(random_tensor({21, 3}, gen));
        EXPECT_LE(l1_mean(a, c).value()[0], l1_mean(a, b).value()[0] + l1_mean(b, c).value()[0] + 1e-15);
        EXPECT_GE(l1_mean(a, b).value()[0], 0.0);
    }
}

TEST(L1Mean, PositiveScalingIsLinear) {
    std::mt19937_64 gen(9);
    T a = random_tensor({21, 2}, gen), b = random_tensor({21, 2}, gen);
    for (double s : {0.01, 3.0, 250.0}) {
        T sa = a, sb = b;
        sa.data() *= s;
        sb.data() *= s;
        EXPECT_LT(relative_error(l1_mean(V::constant(sa), V::constant(sb)).value()[0],
                                 s * l1_mean(V::constant(a), V::constant(b)).value()[0]),
                  1e-12);
    }
}

TEST(L1Mean, TiesHaveZeroSubgradient) {
    std::mt19937_64 gen(10);
    T a = random_tensor({5, 3}, gen);
    V p = V::leaf(a);
    backward(l1_mean(p, V::constant(a)));
    EXPECT_EQ(p.grad_tensor().data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(L1Mean, RejectsShapeMismatch) {
    EXPECT_THROW(l1_mean(V::constant(T({21, 3})), V::constant(T({21, 2}))), ShapeError);
}

TEST(TotalLoss, PerfectPredictionIsZero) {
    std::mt19937_64 gen(11);
    RegressionMatrix j(random_regressor(gen));
    V v = V::constant(random_tensor({778, 3}, gen, -80, 80));
    V j2 = V::constant(random_tensor({21, 2}, gen, 0, 223));
    auto out = total_loss(v, v, j2, j2, j.as_constant<double>(), LossWeights{});
    EXPECT_EQ(out.vert, 0.0);
    EXPECT_EQ(out.j3d, 0.0);
    EXPECT_EQ(out.j2d, 0.0);
    EXPECT_EQ(out.total_value(), 0.0);
}

TEST(TotalLoss, WeightedSumWithDefaultWeights) {
    // One-hot J so each term can be dialled independently: joint r reads vertex r.
    std::vector<Index> pick;
    for (Index r = 0; r < kNumJoints; ++r) pick.push_back(r);
    RegressionMatrix j(one_hot_regressor(pick));
    T v_gt({778, 3}), v_pred({778, 3});
    // Joint vertices off by 0.1 everywhere: L_J3d = 0.1. Other vertices carry the
    // remainder of L_vert = 0.3 over all 2334 elements.
    for (Index r = 0; r < 21; ++r)
        for (Index c = 0; c < 3; ++c) v_pred(r, c) = 0.1;
    const double rest = (0.3 * 2334.0 - 0.1 * 63.0) / (757.0 * 3.0);
    for (Index r = 21; r < 778; ++r)
        for (Index c = 0; c < 3; ++c) v_pred(r, c) = rest;
    T j2_gt({21, 2}), j2_pred({21, 2});
    j2_pred.data().setConstant(0.2);
    const LossWeights w;
    EXPECT_EQ(w.j3d, 10.0);
    EXPECT_EQ(w.j2d, 1.0);
    EXPECT_EQ(w.vert, 10.0);
    auto out = total_loss(V::constant(v_pred), V::constant(v_gt), V::constant(j2_pred), V::constant(j2_gt),
                          j.as_constant<double>(), w);
    EXPECT_NEAR(out.j3d, 0.1, 1e-12);
    EXPECT_NEAR(out.j2d, 0.2, 1e-12);
    EXPECT_NEAR(out.vert, 0.3, 1e-12);
    EXPECT_NEAR(out.total_value(), 4.2, 1e-10);
    EXPECT_NEAR(out.total_value(), w.j3d * out.j3d + w.j2d * out.j2d + w.vert * out.vert, 1e-10);
}

TEST(TotalLoss, GradientWrtVerticesOnTenEntries) {
    std::mt19937_64 gen(12);
    RegressionMatrix j(random_regressor(gen));
    V v_pred = V::leaf(random_tensor({778, 3}, gen, -50, 50));
    V v_gt = V::constant(random_tensor({778, 3}, gen, -50, 50));
    V j2_pred = V::leaf(random_tensor({21, 2}, gen, 0, 223));
    V j2_gt = V::constant(random_tensor({21, 2}, gen, 0, 223));
    V jc = j.as_constant<double>();
    auto r = gradcheck({v_pred}, [&] { return total_loss(v_pred, v_gt, j2_pred, j2_gt, jc, LossWeights{}).total; },
                       1e-5, 10, 21);
    EXPECT_EQ(r.checked, 10);
    EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(LossWeights, MustBePositive) {
    EXPECT_NO_THROW(validate(LossWeights{}));
    EXPECT_THROW(validate(LossWeights{0.0, 1.0, 10.0}), ConfigError);
    EXPECT_THROW(validate(LossWeights{10.0, -1.0, 10.0}), ConfigError);
}
