#pragma once

#include "handmesh/metrics.hpp"

#include <Eigen/Geometry>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <cmath>
#include <limits>
#include <random>

namespace handmesh::testing {

using Cloud = RowMatrix<double>;

inline Cloud random_cloud(Index n, std::mt19937_64& gen, double spread = 50.0) {
    std::normal_distribution<double> d(0.0, spread);
    Cloud c(n, 3);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < 3; ++j) c(i, j) = d(gen);
    return c;
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& gen) {
    std::normal_distribution<double> d(0.0, 1.0);
    Eigen::Quaterniond q(d(gen), d(gen), d(gen), d(gen));
    return q.normalized().toRotationMatrix();
}

inline SimilarityTransform random_similarity(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> s(0.2, 5.0), t(-200.0, 200.0);
    SimilarityTransform x;
    x.scale = s(gen);
    x.rotation = random_rotation(gen);
    x.translation = Eigen::Vector3d(t(gen), t(gen), t(gen));
    return x;
}

// Parameters: log scale, rotation vector (3), translation (3).
inline SimilarityTransform from_params(const Eigen::VectorXd& x) {
    SimilarityTransform t;
    t.scale = std::exp(x[0]);
    const Eigen::Vector3d w = x.segment<3>(1);
    const double angle = w.norm();
    t.rotation = angle < 1e-300 ? Eigen::Matrix3d::Identity()
                                : Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
    t.translation = x.segment<3>(4);
    return t;
}

struct Residuals {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    const Cloud* p;
    const Cloud* g;
    int inputs() const { return 7; }
    int values() const { return int(p->rows() * 3); }
    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
        const Cloud moved = from_params(x).apply(*p) - *g;
        r = Eigen::Map<const Eigen::VectorXd>(moved.data(), moved.size());
        return 0;
    }
};

/// Independent of the closed form: multi-start Levenberg–Marquardt on the
/// raw objective.
inline double numeric_optimum(const Cloud& p, const Cloud& g, std::mt19937_64& gen) {
    Residuals f{&p, &g};
    Eigen::NumericalDiff<Residuals, Eigen::Central> df(f);
    double best = std::numeric_limits<double>::infinity();
    for (int start = 0; start < 12; ++start) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(7);
        if (start > 0) {
            Eigen::AngleAxisd aa(random_rotation(gen));
            x.segment<3>(1) = aa.angle() * aa.axis();
        }
        x.segment<3>(4) = (g.colwise().mean() - p.colwise().mean()).transpose();
        Eigen::LevenbergMarquardt<decltype(df)> lm(df);
        lm.parameters.ftol = 1e-15;
        lm.parameters.xtol = 1e-15;
        lm.parameters.maxfev = 4000;
        lm.minimize(x);
        best = std::min(best, alignment_objective(p, g, from_params(x)));
    }
    return best;
}

}  // namespace handmesh::testing
