#pragma once

#include "handmesh/tensor.hpp"

#include <Eigen/Dense>

#include <string>

namespace handmesh {

struct SimilarityTransform {
    double scale = 1.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    RowMatrix<double> apply(const RowMatrix<double>& points) const;
};

struct Alignment {
    bool ok = false;
    std::string error;
    SimilarityTransform transform;
    RowMatrix<double> aligned;
    /// The unconstrained SVD solution was a reflection and had to be flipped.
    bool reflection_corrected = false;
};

/// Closed-form similarity Procrustes minimising Σ‖s·R·p + t − g‖².
/// Fails (ok = false) on fewer than 3 points or a zero-variance cloud.
Alignment procrustes_align(const RowMatrix<double>& p, const RowMatrix<double>& g);

/// Σ‖s·R·p + t − g‖² for an arbitrary transform.
double alignment_objective(const RowMatrix<double>& p, const RowMatrix<double>& g, const SimilarityTransform& t);

double mean_euclidean(const RowMatrix<double>& p, const RowMatrix<double>& g);

/// mean_euclidean after aligning p to g. A prediction with zero spread is
/// best aligned by collapsing it onto the centroid of g.
double pa_metric(const RowMatrix<double>& p, const RowMatrix<double>& g);

enum class FScoreMode { NearestNeighbor, Corresponded };

const char* to_string(FScoreMode m);
FScoreMode parse_f_score_mode(const std::string& s);

/// F-score between clouds that are already aligned.
double f_score_aligned(const RowMatrix<double>& p, const RowMatrix<double>& g, double tau_mm,
                       FScoreMode mode = FScoreMode::NearestNeighbor);
/// Aligns p to g, then scores.
double f_score(const RowMatrix<double>& p, const RowMatrix<double>& g, double tau_mm,
               FScoreMode mode = FScoreMode::NearestNeighbor);

struct MetricsReport {
    double mpjpe_mm = 0;
    double mpvpe_mm = 0;
    double pa_mpjpe_mm = 0;
    double pa_mpvpe_mm = 0;
    double f_at_05 = 0;
    double f_at_15 = 0;
};

/// Per-sample metrics. Joints and vertices are aligned independently; the
/// F-scores use the aligned vertices.
MetricsReport evaluate_sample(const RowMatrix<double>& vertices_pred, const RowMatrix<double>& vertices_gt,
                              const RowMatrix<double>& joints_pred, const RowMatrix<double>& joints_gt,
                              FScoreMode mode = FScoreMode::NearestNeighbor);

}  // namespace handmesh
