#include "handmesh/metrics.hpp"

#include <limits>
#include <stdexcept>

namespace handmesh {
namespace {

void require_same(const RowMatrix<double>& p, const RowMatrix<double>& g, const char* op) {
    if (p.rows() != g.rows() || p.cols() != 3 || g.cols() != 3) {
        throw ShapeError(std::string(op) + ": expected matching N×3 clouds, got " + std::to_string(p.rows()) + "x" +
                         std::to_string(p.cols()) + " and " + std::to_string(g.rows()) + "x" +
                         std::to_string(g.cols()));
    }
}

double spread(const RowMatrix<double>& centred) { return centred.squaredNorm() / double(centred.rows()); }

}  // namespace

RowMatrix<double> SimilarityTransform::apply(const RowMatrix<double>& points) const {
    RowMatrix<double> out = scale * points * rotation.transpose();
    out.rowwise() += translation.transpose();
    return out;
}

Alignment procrustes_align(const RowMatrix<double>& p, const RowMatrix<double>& g) {
    require_same(p, g, "procrustes_align");
    Alignment a;
    const Index n = p.rows();
    if (n < 3) {
        a.error = "procrustes_align: need at least 3 points";
        return a;
    }
    const Eigen::RowVector3d mu_p = p.colwise().mean();
    const Eigen::RowVector3d mu_g = g.colwise().mean();
    const RowMatrix<double> x = p.rowwise() - mu_p;
    const RowMatrix<double> y = g.rowwise() - mu_g;
    const double var_p = spread(x);
    if (spread(y) <= std::numeric_limits<double>::min()) {
        a.error = "procrustes_align: ground-truth cloud has zero variance";
        return a;
    }
    if (var_p <= std::numeric_limits<double>::min()) {
        a.error = "procrustes_align: predicted cloud has zero variance";
        return a;
    }
    const Eigen::Matrix3d sigma = y.transpose() * x / double(n);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d = Eigen::Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) {
        d[2] = -1;
        a.reflection_corrected = true;
    }
    a.transform.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    a.transform.scale = svd.singularValues().dot(d) / var_p;
    a.transform.translation = mu_g.transpose() - a.transform.scale * a.transform.rotation * mu_p.transpose();
    if (!(a.transform.scale > 0)) {
        a.error = "procrustes_align: non-positive optimal scale (clouds are anti-correlated)";
        return a;
    }
    a.aligned = a.transform.apply(p);
    a.ok = true;
    return a;
}

double alignment_objective(const RowMatrix<double>& p, const RowMatrix<double>& g, const SimilarityTransform& t) {
    require_same(p, g, "alignment_objective");
    return (t.apply(p) - g).squaredNorm();
}

double mean_euclidean(const RowMatrix<double>& p, const RowMatrix<double>& g) {
    require_same(p, g, "mean_euclidean");
    return (p - g).rowwise().norm().mean();
}

double pa_metric(const RowMatrix<double>& p, const RowMatrix<double>& g) {
    const Alignment a = procrustes_align(p, g);
    if (a.ok) return mean_euclidean(a.aligned, g);
    if (spread(RowMatrix<double>(g.rowwise() - g.colwise().mean())) <= std::numeric_limits<double>::min()) {
        throw std::invalid_argument(a.error);
    }
    // Degenerate prediction: s → 0 is optimal, every point lands on g's centroid.
    return (g.rowwise() - g.colwise().mean()).rowwise().norm().mean();
}

const char* to_string(FScoreMode m) { return m == FScoreMode::Corresponded ? "corresponded" : "nearest-neighbor"; }

FScoreMode parse_f_score_mode(const std::string& s) {
    if (s == "nearest-neighbor") return FScoreMode::NearestNeighbor;
    if (s == "corresponded") return FScoreMode::Corresponded;
    throw std::invalid_argument("unknown f-score mode '" + s + "'");
}

double f_score_aligned(const RowMatrix<double>& p, const RowMatrix<double>& g, double tau_mm, FScoreMode mode) {
    if (p.rows() == 0 || g.rows() == 0 || p.cols() != 3 || g.cols() != 3) {
        throw ShapeError("f_score: both clouds must be nonempty N×3");
    }
    double precision = 0, recall = 0;
    if (mode == FScoreMode::Corresponded) {
        require_same(p, g, "f_score");
        const double hits = ((p - g).rowwise().norm().array() <= tau_mm).cast<double>().sum();
        precision = recall = hits / double(p.rows());
    } else {
        const double tau2 = tau_mm * tau_mm;
        Eigen::VectorXd best_p = Eigen::VectorXd::Constant(p.rows(), std::numeric_limits<double>::infinity());
        Eigen::VectorXd best_g = Eigen::VectorXd::Constant(g.rows(), std::numeric_limits<double>::infinity());
        for (Index i = 0; i < p.rows(); ++i) {
            for (Index j = 0; j < g.rows(); ++j) {
                const double d2 = (p.row(i) - g.row(j)).squaredNorm();
                if (d2 < best_p[i]) best_p[i] = d2;
                if (d2 < best_g[j]) best_g[j] = d2;
            }
        }
        precision = (best_p.array() <= tau2).cast<double>().mean();
        recall = (best_g.array() <= tau2).cast<double>().mean();
    }
    if (precision + recall == 0) return 0.0;
    return 2 * precision * recall / (precision + recall);
}

double f_score(const RowMatrix<double>& p, const RowMatrix<double>& g, double tau_mm, FScoreMode mode) {
    const Alignment a = procrustes_align(p, g);
    if (a.ok) return f_score_aligned(a.aligned, g, tau_mm, mode);
    RowMatrix<double> collapsed(p.rows(), 3);
    collapsed.rowwise() = g.colwise().mean();
    return f_score_aligned(collapsed, g, tau_mm, mode);
}

MetricsReport evaluate_sample(const RowMatrix<double>& vertices_pred, const RowMatrix<double>& vertices_gt,
                              const RowMatrix<double>& joints_pred, const RowMatrix<double>& joints_gt,
                              FScoreMode mode) {
    MetricsReport r;
    r.mpjpe_mm = mean_euclidean(joints_pred, joints_gt);
    r.mpvpe_mm = mean_euclidean(vertices_pred, vertices_gt);
    r.pa_mpjpe_mm = pa_metric(joints_pred, joints_gt);
    r.pa_mpvpe_mm = pa_metric(vertices_pred, vertices_gt);
    r.f_at_05 = f_score(vertices_pred, vertices_gt, 5.0, mode);
    r.f_at_15 = f_score(vertices_pred, vertices_gt, 15.0, mode);
    return r;
}

}  // namespace handmesh
