#pragma once

#include "handmesh/loss.hpp"
#include "handmesh/rng.hpp"
#include "handmesh/tensor.hpp"
#include "handmesh/token_generator.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <vector>

namespace handmesh {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Joint order: wrist, then thumb, index, middle, ring, pinky, each listed
/// base to tip.
inline constexpr int kFingers = 5;
inline constexpr int kJointsPerFinger = 4;
inline constexpr int kPalmRings = 13;
inline constexpr int kPalmSegments = 27;
inline constexpr int kPalmVertices = kPalmRings * kPalmSegments + 2;
inline constexpr int kFingerRings = 12;
inline constexpr int kFingerSegments = 7;
inline constexpr int kFingerVertices = kFingerRings * kFingerSegments + 1;
static_assert(kPalmVertices + kFingers * kFingerVertices == kNumVertices);

struct TemplateMesh {
    RowMatrix<double> vertices;              // 778×3, mm
    std::vector<std::array<int, 3>> faces;
};

/// Rotation limits are boxes on axis-angle components expressed in each
/// joint's local frame (flexion, twist, abduction).
struct Skeleton {
    RowMatrix<double> joints;                // 21×3, mm
    std::array<int, kNumJoints> parents{};
    std::array<Mat3, kNumJoints> frames{};   // columns: flexion, twist, abduction axes
    std::array<Vec3, kNumJoints> lower{};
    std::array<Vec3, kNumJoints> upper{};
    Vec3 global_lower{-0.6, -0.6, -0.6};     // axis-angle components in the canonical frame
    Vec3 global_upper{0.6, 0.6, 0.6};
};

struct SkinWeights {
    RowMatrix<double> w;  // 778×21
};

struct HandModel {
    TemplateMesh mesh;
    Skeleton skeleton;
    SkinWeights weights;
    RegressionMatrix regressor;
};

/// Deterministic construction; identical on every call.
HandModel build_template();
const HandModel& default_hand();

RegressionMatrix regression_matrix_from_weights(const SkinWeights& w);

struct Pose {
    Vec3 global = Vec3::Zero();                  // canonical-frame axis-angle
    std::array<Vec3, kNumJoints> local{};        // local-frame axis-angle components
    Pose() { local.fill(Vec3::Zero()); }
};

Pose sample_pose(const Skeleton& skeleton, std::uint64_t seed);
Mat3 axis_angle_to_matrix(const Vec3& axis_angle);

/// Rigid per-joint transforms G_j(x) = R_j x + t_j from forward kinematics.
struct JointTransforms {
    std::array<Mat3, kNumJoints> rotation{};
    std::array<Vec3, kNumJoints> translation{};
};
JointTransforms forward_kinematics(const Skeleton& skeleton, const Pose& pose);

/// Linear blend skinning; the wrist stays at the origin.
RowMatrix<double> skin(const TemplateMesh& mesh, const Skeleton& skeleton, const SkinWeights& w,
                       const Pose& pose);

struct Camera {
    double scale = 1.0;                      // px per mm
    Eigen::Vector2d translation{112, 112};   // px
};

RowMatrix<double> project(const RowMatrix<double>& points, const Camera& camera);

inline constexpr Index kImageSide = 224;
inline constexpr double kHeatmapSigma = 4.0;
inline constexpr double kHeatmapTruncation = 3.0;  // in sigmas
inline constexpr double kSilhouetteSigma = 1.5;

double heatmap_value(double dx, double dy);
/// kInputChannels × 224 × 224 in [0, 1].
Tensor<float> render_input(const RowMatrix<double>& joints_2d, const RowMatrix<double>& vertices_2d);

struct HandSample {
    Tensor<float> input;
    RowMatrix<double> vertices;   // 778×3 mm, root-relative
    RowMatrix<double> joints_3d;  // 21×3 mm
    RowMatrix<double> joints_2d;  // 21×2 px
    Camera camera;
    std::uint64_t seed = 0;
};

std::uint64_t sample_seed(std::uint64_t dataset_seed, std::uint64_t index);
Camera fit_camera(const RowMatrix<double>& vertices, std::uint64_t seed);
HandSample generate_sample(const HandModel& hand, std::uint64_t seed, bool with_input = true);

struct ConsistencyError {
    double joints_3d = 0;  // max |J·V − J_3d|, mm
    double joints_2d = 0;  // max |project(J_3d) − J_2d|, px
    bool in_bounds = true;
};
ConsistencyError check_consistency(const HandSample& s, const RegressionMatrix& j);

}  // namespace handmesh
