#include "handmesh/synthetic_hand.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace handmesh {
namespace {

constexpr double kPi = std::numbers::pi;

struct FingerSpec {
    Vec3 base;
    Vec3 direction;
    std::array<double, 3> lengths;
    double base_radius;
    double tip_radius;
};

// Canonical pose: fingers along +y, thumb toward +x, palm facing −z.
const std::array<FingerSpec, kFingers>& finger_specs() {
    static const std::array<FingerSpec, kFingers> specs{{
        {{20, 16, 0}, Vec3(0.75, 0.66, 0).normalized(), {36, 30, 26}, 10.5, 8.0},
        {{24, 84, 0}, Vec3(0.08, 1, 0).normalized(), {40, 25, 21}, 9.0, 7.0},
        {{8, 94, 0}, Vec3(0, 1, 0), {44, 28, 23}, 9.5, 7.5},
        {{-8, 91, 0}, Vec3(-0.06, 1, 0).normalized(), {41, 26, 22}, 9.0, 7.0},
        {{-23, 78, 0}, Vec3(-0.15, 1, 0).normalized(), {33, 20, 18}, 8.0, 6.0},
    }};
    return specs;
}

const Vec3 kPalmCenter{0, 44, 0};
const Vec3 kPalmRadii{40, 50, 14};
const Vec3 kWrist{0, 9, 0};

int finger_joint(int finger, int k) { return 1 + finger * kJointsPerFinger + k; }

void build_skeleton(Skeleton& sk) {
    sk.joints = RowMatrix<double>::Zero(kNumJoints, 3);
    sk.joints.row(0) = kWrist.transpose();
    sk.parents[0] = -1;
    sk.frames[0] = Mat3::Identity();
    sk.lower[0] = sk.upper[0] = Vec3::Zero();
    const Vec3 normal = Vec3::UnitZ();
    for (int f = 0; f < kFingers; ++f) {
        const FingerSpec& spec = finger_specs()[f];
        Vec3 p = spec.base;
        Mat3 frame;
        frame.col(0) = normal.cross(spec.direction).normalized();  // flexion closes toward the palm
        frame.col(1) = spec.direction;
        frame.col(2) = normal;
        for (int k = 0; k < kJointsPerFinger; ++k) {
            const int j = finger_joint(f, k);
            sk.joints.row(j) = p.transpose();
            sk.parents[j] = k == 0 ? 0 : j - 1;
            sk.frames[j] = frame;
            if (k < 3) p += spec.lengths[k] * spec.direction;
        }
        const bool thumb = f == 0;
        const int b = finger_joint(f, 0);
        if (thumb) {
            sk.lower[b] = {-0.2, -0.2, -0.3};
            sk.upper[b] = {0.6, 0.2, 0.4};
            sk.lower[b + 1] = {0.0, 0.0, -0.1};
            sk.upper[b + 1] = {0.7, 0.0, 0.1};
            sk.lower[b + 2] = {0.0, 0.0, 0.0};
            sk.upper[b + 2] = {1.0, 0.0, 0.0};
        } else {
            sk.lower[b] = {-0.2, -0.1, -0.25};
            sk.upper[b] = {1.3, 0.1, 0.25};
            sk.lower[b + 1] = {0.0, 0.0, 0.0};
            sk.upper[b + 1] = {1.5, 0.0, 0.0};
            sk.lower[b + 2] = {0.0, 0.0, 0.0};
            sk.upper[b + 2] = {1.0, 0.0, 0.0};
        }
        sk.lower[b + 3] = sk.upper[b + 3] = Vec3::Zero();
    }
}

void build_mesh(TemplateMesh& mesh, std::vector<int>& part) {
    mesh.vertices.resize(kNumVertices, 3);
    mesh.faces.clear();
    part.assign(kNumVertices, -1);
    int v = 0;

    // Palm: latitude-longitude ellipsoid with poles on the long axis.
    const int south = v++;
    mesh.vertices.row(south) = (kPalmCenter - Vec3(0, kPalmRadii.y(), 0)).transpose();
    for (int r = 0; r < kPalmRings; ++r) {
        const double theta = kPi * (r + 1) / (kPalmRings + 1);
        for (int s = 0; s < kPalmSegments; ++s) {
            const double phi = 2 * kPi * s / kPalmSegments;
            const Vec3 offset(kPalmRadii.x() * std::sin(theta) * std::cos(phi), -kPalmRadii.y() * std::cos(theta),
                              kPalmRadii.z() * std::sin(theta) * std::sin(phi));
            mesh.vertices.row(v++) = (kPalmCenter + offset).transpose();
        }
    }
    const int north = v++;
    mesh.vertices.row(north) = (kPalmCenter + Vec3(0, kPalmRadii.y(), 0)).transpose();
    auto palm = [&](int r, int s) { return 1 + r * kPalmSegments + (s % kPalmSegments); };
    for (int s = 0; s < kPalmSegments; ++s) {
        mesh.faces.push_back({south, palm(0, s + 1), palm(0, s)});
        mesh.faces.push_back({north, palm(kPalmRings - 1, s), palm(kPalmRings - 1, s + 1)});
        for (int r = 0; r + 1 < kPalmRings; ++r) {
            mesh.faces.push_back({palm(r, s), palm(r, s + 1), palm(r + 1, s)});
            mesh.faces.push_back({palm(r + 1, s), palm(r, s + 1), palm(r + 1, s + 1)});
        }
    }

    // Fingers: tapered tubes along the joint chain, closed by a tip vertex.
    for (int f = 0; f < kFingers; ++f) {
        const FingerSpec& spec = finger_specs()[f];
        const double length = spec.lengths[0] + spec.lengths[1] + spec.lengths[2];
        const Vec3 a = Vec3::UnitZ().cross(spec.direction).normalized();
        const Vec3 n = Vec3::UnitZ();
        const int first = v;
        for (int r = 0; r < kFingerRings; ++r) {
            const double t = double(r) / (kFingerRings - 1);
            const double radius = spec.base_radius + t * (spec.tip_radius - spec.base_radius);
            const Vec3 centre = spec.base + t * length * spec.direction;
            for (int s = 0; s < kFingerSegments; ++s) {
                const double phi = 2 * kPi * s / kFingerSegments;
                part[v] = f;
                mesh.vertices.row(v++) = (centre + radius * (std::cos(phi) * a + std::sin(phi) * n)).transpose();
            }
        }
        const int tip = v++;
        part[tip] = f;
        mesh.vertices.row(tip) = (spec.base + (length + 0.5 * spec.tip_radius) * spec.direction).transpose();
        auto ring = [&](int r, int s) { return first + r * kFingerSegments + (s % kFingerSegments); };
        for (int s = 0; s < kFingerSegments; ++s) {
            for (int r = 0; r + 1 < kFingerRings; ++r) {
                mesh.faces.push_back({ring(r, s), ring(r, s + 1), ring(r + 1, s)});
                mesh.faces.push_back({ring(r + 1, s), ring(r, s + 1), ring(r + 1, s + 1)});
            }
            mesh.faces.push_back({ring(kFingerRings - 1, s), ring(kFingerRings - 1, s + 1), tip});
        }
    }
}

// Each vertex is bound to its two nearest candidate joints with inverse
// distance weights. Finger vertices only see their own finger's joints; palm
// vertices see the wrist and the finger bases.
SkinWeights build_weights(const TemplateMesh& mesh, const Skeleton& sk, const std::vector<int>& part) {
    SkinWeights w;
    w.w = RowMatrix<double>::Zero(kNumVertices, kNumJoints);
    std::vector<int> palm_candidates{0};
    for (int f = 0; f < kFingers; ++f) palm_candidates.push_back(finger_joint(f, 0));
    for (Index i = 0; i < kNumVertices; ++i) {
        std::vector<int> candidates;
        if (part[i] < 0) {
            candidates = palm_candidates;
        } else {
            for (int k = 0; k < kJointsPerFinger; ++k) candidates.push_back(finger_joint(part[i], k));
        }
        std::vector<std::pair<double, int>> dist;
        for (int j : candidates) dist.emplace_back((mesh.vertices.row(i) - sk.joints.row(j)).norm(), j);
        std::partial_sort(dist.begin(), dist.begin() + 2, dist.end());
        const double w0 = 1.0 / std::max(dist[0].first * dist[0].first, 1e-12);
        const double w1 = 1.0 / std::max(dist[1].first * dist[1].first, 1e-12);
        w.w(i, dist[0].second) = w0 / (w0 + w1);
        w.w(i, dist[1].second) = w1 / (w0 + w1);
    }
    return w;
}

}  // namespace

RegressionMatrix regression_matrix_from_weights(const SkinWeights& w) {
    if (w.w.cols() != kNumJoints || w.w.rows() != kNumVertices) {
        throw ShapeError("skin weights must be " + std::to_string(kNumVertices) + "x" + std::to_string(kNumJoints));
    }
    RowMatrix<double> j = w.w.transpose();
    for (Index r = 0; r < kNumJoints; ++r) {
        const double total = j.row(r).sum();
        if (!(total > 0)) throw std::invalid_argument("joint " + std::to_string(r) + " has no skinned vertices");
        j.row(r) /= total;
    }
    return RegressionMatrix(std::move(j));
}

HandModel build_template() {
    HandModel hand;
    std::vector<int> part;
    build_skeleton(hand.skeleton);
    build_mesh(hand.mesh, part);
    hand.weights = build_weights(hand.mesh, hand.skeleton, part);
    hand.regressor = regression_matrix_from_weights(hand.weights);
    return hand;
}

const HandModel& default_hand() {
    static const HandModel hand = build_template();
    return hand;
}

Mat3 axis_angle_to_matrix(const Vec3& axis_angle) {
    const double angle = axis_angle.norm();
    if (angle == 0) return Mat3::Identity();
    return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Pose sample_pose(const Skeleton& sk, std::uint64_t seed) {
    Rng rng = Rng::substream(seed, "pose");
    Pose pose;
    for (int c = 0; c < 3; ++c) pose.global[c] = rng.uniform(sk.global_lower[c], sk.global_upper[c]);
    for (Index j = 0; j < kNumJoints; ++j) {
        for (int c = 0; c < 3; ++c) pose.local[j][c] = rng.uniform(sk.lower[j][c], sk.upper[j][c]);
    }
    return pose;
}

JointTransforms forward_kinematics(const Skeleton& sk, const Pose& pose) {
    JointTransforms g;
    for (Index j = 0; j < kNumJoints; ++j) {
        const Mat3 local = axis_angle_to_matrix(sk.frames[j] * pose.local[j]);
        const Vec3 p = sk.joints.row(j).transpose();
        const int parent = sk.parents[j];
        if (parent < 0) {
            // Root: rotate about the wrist and move it to the origin.
            const Mat3 r = axis_angle_to_matrix(pose.global) * local;
            g.rotation[j] = r;
            g.translation[j] = -r * p;
        } else {
            g.rotation[j] = g.rotation[parent] * local;
            g.translation[j] = g.rotation[parent] * (p - local * p) + g.translation[parent];
        }
    }
    return g;
}

RowMatrix<double> skin(const TemplateMesh& mesh, const Skeleton& sk, const SkinWeights& w, const Pose& pose) {
    const JointTransforms g = forward_kinematics(sk, pose);
    RowMatrix<double> out = RowMatrix<double>::Zero(mesh.vertices.rows(), 3);
    // Blending offsets from the root transform equals Σ w_j G_j(v) because rows
    // sum to 1, and keeps poses where every G_j coincides exact.
    for (Index i = 0; i < mesh.vertices.rows(); ++i) {
        const Vec3 v = mesh.vertices.row(i).transpose();
        const Vec3 root = g.rotation[0] * v + g.translation[0];
        Vec3 acc = Vec3::Zero();
        for (Index j = 0; j < kNumJoints; ++j) {
            const double wij = w.w(i, j);
            if (wij != 0) acc += wij * (g.rotation[j] * v + g.translation[j] - root);
        }
        out.row(i) = (root + acc).transpose();
    }
    return out;
}

RowMatrix<double> project(const RowMatrix<double>& points, const Camera& camera) {
    if (!(camera.scale > 0)) throw std::invalid_argument("camera scale must be positive");
    if (points.cols() != 3) throw ShapeError("project: expected N×3 points");
    RowMatrix<double> out(points.rows(), 2);
    out.col(0) = camera.scale * points.col(0).array() + camera.translation.x();
    out.col(1) = camera.scale * points.col(1).array() + camera.translation.y();
    return out;
}

double heatmap_value(double dx, double dy) {
    const double d2 = dx * dx + dy * dy;
    const double cutoff = kHeatmapTruncation * kHeatmapSigma;
    if (d2 > cutoff * cutoff) return 0.0;
    return std::exp(-d2 / (2 * kHeatmapSigma * kHeatmapSigma));
}

Tensor<float> render_input(const RowMatrix<double>& joints_2d, const RowMatrix<double>& vertices_2d) {
    Tensor<float> img({kNumJoints + 1, kImageSide, kImageSide});
    const int radius = static_cast<int>(std::ceil(kHeatmapTruncation * kHeatmapSigma));
    for (Index j = 0; j < joints_2d.rows(); ++j) {
        const double u = joints_2d(j, 0), v = joints_2d(j, 1);
        const int cx = static_cast<int>(std::lround(u)), cy = static_cast<int>(std::lround(v));
        for (int y = std::max(0, cy - radius); y <= std::min<int>(kImageSide - 1, cy + radius); ++y) {
            for (int x = std::max(0, cx - radius); x <= std::min<int>(kImageSide - 1, cx + radius); ++x) {
                img(j, y, x) = static_cast<float>(heatmap_value(x - u, y - v));
            }
        }
    }
    const Index sil = kNumJoints;
    const double cutoff = 3 * kSilhouetteSigma;
    const int sr = static_cast<int>(std::ceil(cutoff));
    for (Index i = 0; i < vertices_2d.rows(); ++i) {
        const double u = vertices_2d(i, 0), v = vertices_2d(i, 1);
        const int cx = static_cast<int>(std::lround(u)), cy = static_cast<int>(std::lround(v));
        for (int y = std::max(0, cy - sr); y <= std::min<int>(kImageSide - 1, cy + sr); ++y) {
            for (int x = std::max(0, cx - sr); x <= std::min<int>(kImageSide - 1, cx + sr); ++x) {
                const double d2 = (x - u) * (x - u) + (y - v) * (y - v);
                if (d2 > cutoff * cutoff) continue;
                const float value = static_cast<float>(std::exp(-d2 / (2 * kSilhouetteSigma * kSilhouetteSigma)));
                img(sil, y, x) = std::max(img(sil, y, x), value);
            }
        }
    }
    return img;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, std::uint64_t index) {
    return mix_seed(mix_seed(dataset_seed, hash_name("dataset")), index);
}

Camera fit_camera(const RowMatrix<double>& vertices, std::uint64_t seed) {
    constexpr double margin = 8.0;
    Rng rng = Rng::substream(seed, "camera");
    const Eigen::Vector2d lo = vertices.leftCols<2>().colwise().minCoeff().transpose();
    const Eigen::Vector2d hi = vertices.leftCols<2>().colwise().maxCoeff().transpose();
    const double extent = (hi - lo).maxCoeff();
    const double usable = double(kImageSide - 1) - 2 * margin;
    Camera cam;
    cam.scale = rng.uniform(0.75, 0.95) * usable / extent;
    const Eigen::Vector2d centre = 0.5 * (lo + hi);
    const Eigen::Vector2d half = 0.5 * cam.scale * (hi - lo);
    const double mid = 0.5 * double(kImageSide - 1);
    for (int a = 0; a < 2; ++a) {
        const double slack = std::max(0.0, 0.5 * usable - half[a]);
        cam.translation[a] = mid + rng.uniform(-slack, slack) - cam.scale * centre[a];
    }
    return cam;
}

HandSample generate_sample(const HandModel& hand, std::uint64_t seed, bool with_input) {
    HandSample s;
    s.seed = seed;
    const Pose pose = sample_pose(hand.skeleton, seed);
    s.vertices = skin(hand.mesh, hand.skeleton, hand.weights, pose);
    s.joints_3d = hand.regressor.matrix() * s.vertices;
    s.camera = fit_camera(s.vertices, seed);
    s.joints_2d = project(s.joints_3d, s.camera);
    if (with_input) s.input = render_input(s.joints_2d, project(s.vertices, s.camera));
    return s;
}

ConsistencyError check_consistency(const HandSample& s, const RegressionMatrix& j) {
    ConsistencyError e;
    e.joints_3d = (j.matrix() * s.vertices - s.joints_3d).cwiseAbs().maxCoeff();
    e.joints_2d = (project(s.joints_3d, s.camera) - s.joints_2d).cwiseAbs().maxCoeff();
    const double hi = double(kImageSide - 1);
    e.in_bounds = (s.joints_2d.array() >= 0).all() && (s.joints_2d.array() <= hi).all();
    return e;
}

}  // namespace handmesh
