#include "handmesh/metrics.hpp"

#include <gtest/gtest.h>

#include "support/procrustes_oracle.hpp"

using namespace handmesh;
using namespace handmesh::testing;

TEST(Procrustes, IdenticalCloudsAlignToIdentity) {
    std::mt19937_64 gen(1);
    Cloud g = random_cloud(21, gen);
    Alignment a = procrustes_align(g, g);
    ASSERT_TRUE(a.ok);
    EXPECT_NEAR(a.transform.scale, 1.0, 1e-12);
    EXPECT_LT((a.transform.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-10);
    EXPECT_LT(a.transform.translation.norm(), 1e-9);
    EXPECT_LT(mean_euclidean(a.aligned, g), 1e-9);
}

TEST(Procrustes, RecoversAKnownSimilarity) {
    std::mt19937_64 gen(2);
    Cloud g = random_cloud(21, gen);
    const Eigen::Matrix3d r0 = Eigen::AngleAxisd(1.1, Eigen::Vector3d(1, 2, -0.5).normalized()).toRotationMatrix();
    SimilarityTransform forward{2.0, r0, Eigen::Vector3d(10, 20, 30)};
    Cloud p = forward.apply(g);
    Alignment a = procrustes_align(p, g);
    ASSERT_TRUE(a.ok);
    EXPECT_LT((a.aligned - g).rowwise().norm().maxCoeff(), 1e-9);
    EXPECT_NEAR(a.transform.scale, 0.5, 1e-12);
    EXPECT_LT((a.transform.rotation - r0.transpose()).norm(), 1e-10);
}

TEST(Procrustes, MatchesNumericOptimizerOnRandomInstances) {
    std::mt19937_64 gen(3);
    double worst = 0;
    for (int instance = 0; instance < 100; ++instance) {
        Cloud g = random_cloud(21, gen);
        // Half are noisy similarity copies, half unrelated clouds.
        Cloud p = instance % 2 == 0 ? Cloud(random_similarity(gen).apply(g) + random_cloud(21, gen, 8.0))
                                    : random_cloud(21, gen, 30.0);
        Alignment a = procrustes_align(p, g);
        ASSERT_TRUE(a.ok);
        const double closed = alignment_objective(p, g, a.transform);
        const double numeric = numeric_optimum(p, g, gen);
        worst = std::max(worst, std::abs(closed - numeric) / numeric);
        EXPECT_LE(closed, numeric * (1 + 1e-9)) << instance;
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Procrustes, RotationIsAlwaysProper) {
    std::mt19937_64 gen(4);
    for (int i = 0; i < 50; ++i) {
        Alignment a = procrustes_align(random_cloud(21, gen), random_cloud(21, gen));
        ASSERT_TRUE(a.ok);
        const Eigen::Matrix3d& r = a.transform.rotation;
        EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).norm(), 1e-9);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
        EXPECT_GT(a.transform.scale, 0.0);
    }
}

TEST(Procrustes, MirroredCloudTriggersReflectionCorrection) {
    std::mt19937_64 gen(5);
    Cloud g = random_cloud(21, gen);
    Cloud p = g;
    p.col(0) *= -1.0;
    Alignment a = procrustes_align(p, g);
    ASSERT_TRUE(a.ok);
    EXPECT_TRUE(a.reflection_corrected);
    EXPECT_NEAR(a.transform.rotation.determinant(), 1.0, 1e-9);
    EXPECT_GT(mean_euclidean(a.aligned, g), 1.0);  // a mirror cannot be undone by a rotation
}

TEST(Procrustes, DegenerateInputsReportErrors) {
    std::mt19937_64 gen(6);
    Cloud g = random_cloud(21, gen);
    Cloud flat = Cloud::Constant(21, 3, 4.0);
    Alignment a = procrustes_align(g, flat);
    EXPECT_FALSE(a.ok);
    EXPECT_FALSE(a.error.empty());
    EXPECT_FALSE(procrustes_align(g.topRows(2), g.topRows(2)).ok);
    // A collapsed prediction still yields a finite metric.
    EXPECT_TRUE(std::isfinite(pa_metric(flat, g)));
}

TEST(MeanEuclidean, BasicCases) {
    std::mt19937_64 gen(7);
    Cloud g = random_cloud(778, gen);
    EXPECT_EQ(mean_euclidean(g, g), 0.0);
    Cloud shifted = g;
    shifted.col(0).array() += 1.0;
    EXPECT_NEAR(mean_euclidean(shifted, g), 1.0, 1e-12);
    Cloud p = random_cloud(778, gen);
    double acc = 0;
    for (Index i = 0; i < 778; ++i) {
        const double dx = p(i, 0) - g(i, 0), dy = p(i, 1) - g(i, 1), dz = p(i, 2) - g(i, 2);
        acc += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    EXPECT_NEAR(mean_euclidean(p, g) / (acc / 778.0), 1.0, 1e-12);
    EXPECT_THROW(mean_euclidean(p.topRows(10), g), std::invalid_argument);
}

TEST(PaMetric, VanishesOnSimilarityCopies) {
    std::mt19937_64 gen(8);
    for (int i = 0; i < 20; ++i) {
        Cloud g = random_cloud(21, gen);
        EXPECT_LT(pa_metric(random_similarity(gen).apply(g), g), 1e-9);
        EXPECT_LT(pa_metric(g, g), 1e-9);
    }
}

TEST(PaMetric, NeverWorseThanUnaligned) {
    std::mt19937_64 gen(9);
    for (int i = 0; i < 50; ++i) {
        Cloud g = random_cloud(21, gen), p = random_cloud(21, gen);
        EXPECT_LE(pa_metric(p, g), mean_euclidean(p, g) + 1e-9);
    }
}

TEST(PaMetric, InvariantUnderSimilarityTransforms) {
    std::mt19937_64 gen(10);
    double worst = 0;
    for (int instance = 0; instance < 10; ++instance) {
        Cloud g = random_cloud(21, gen);
        Cloud p = g + random_cloud(21, gen, 10.0);
        const double base = pa_metric(p, g);
        for (int t = 0; t < 100; ++t) worst = std::max(worst, std::abs(pa_metric(random_similarity(gen).apply(p), g) - base));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(PaMetric, OptimalOverRandomSimilarities) {
    std::mt19937_64 gen(11);
    for (int instance = 0; instance < 10; ++instance) {
        Cloud g = random_cloud(21, gen);
        Cloud p = g + random_cloud(21, gen, 10.0);
        const double pa = pa_metric(p, g);
        for (int t = 0; t < 100; ++t) EXPECT_LE(pa, mean_euclidean(random_similarity(gen).apply(p), g) + 1e-9);
    }
}

TEST(FScore, IdenticalCloudsScoreOne) {
    std::mt19937_64 gen(12);
    Cloud g = random_cloud(100, gen);
    EXPECT_DOUBLE_EQ(f_score(g, g, 5.0), 1.0);
    EXPECT_DOUBLE_EQ(f_score(g, g, 15.0), 1.0);
    EXPECT_DOUBLE_EQ(f_score(g, g, 5.0, FScoreMode::Corresponded), 1.0);
}

TEST(FScore, FarApartCloudsScoreZero) {
    Cloud g(4, 3), p(4, 3);
    g << 0, 0, 0, 100, 0, 0, 0, 100, 0, 0, 0, 100;
    p = g;
    p.col(0).array() += 1000.0;
    EXPECT_EQ(f_score_aligned(p, g, 5.0), 0.0);
    EXPECT_EQ(f_score_aligned(p, g, 15.0), 0.0);
}

TEST(FScore, HalfWithinThresholdBothWaysGivesOneHalf) {
    // Four ground-truth points far apart; two predictions sit on GT points,
    // the other two are far from everything.
    Cloud g(4, 3), p(4, 3);
    g << 0, 0, 0, 100, 0, 0, 0, 100, 0, 0, 0, 100;
    p << 0, 0, 1, 100, 1, 0, 500, 500, 500, -500, 500, -500;
    // Brute-force oracle.
    auto within = [](const Cloud& a, const Cloud& b, double tau) {
        Index hit = 0;
        for (Index i = 0; i < a.rows(); ++i) hit += (b.rowwise() - a.row(i)).rowwise().norm().minCoeff() <= tau;
        return double(hit) / double(a.rows());
    };
    ASSERT_EQ(within(p, g, 5.0), 0.5);
    ASSERT_EQ(within(g, p, 5.0), 0.5);
    EXPECT_DOUBLE_EQ(f_score_aligned(p, g, 5.0), 0.5);
}

TEST(FScore, MonotoneInThreshold) {
    std::mt19937_64 gen(13);
    for (int i = 0; i < 20; ++i) {
        Cloud g = random_cloud(200, gen);
        Cloud p = g + random_cloud(200, gen, 6.0);
        const double f5 = f_score(p, g, 5.0), f15 = f_score(p, g, 15.0);
        EXPECT_GE(f15, f5);
        EXPECT_GE(f5, 0.0);
        EXPECT_LE(f15, 1.0);
    }
}

TEST(FScore, ModeNamesRoundTrip) {
    EXPECT_EQ(parse_f_score_mode(to_string(FScoreMode::NearestNeighbor)), FScoreMode::NearestNeighbor);
    EXPECT_EQ(parse_f_score_mode(to_string(FScoreMode::Corresponded)), FScoreMode::Corresponded);
}

TEST(EvaluateSample, AlignmentNeverHurtsAndScoresAreBounded) {
    std::mt19937_64 gen(14);
    for (int i = 0; i < 10; ++i) {
        Cloud vg = random_cloud(778, gen), jg = random_cloud(21, gen);
        Cloud vp = vg + random_cloud(778, gen, 7.0), jp = jg + random_cloud(21, gen, 7.0);
        MetricsReport r = evaluate_sample(vp, vg, jp, jg);
        EXPECT_LE(r.pa_mpjpe_mm, r.mpjpe_mm + 1e-9);
        EXPECT_LE(r.pa_mpvpe_mm, r.mpvpe_mm + 1e-9);
        EXPECT_GE(r.f_at_15, r.f_at_05);
        EXPECT_GE(r.f_at_05, 0.0);
        EXPECT_LE(r.f_at_15, 1.0);
    }
}
