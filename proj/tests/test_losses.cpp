#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "garmnet/losses.hpp"

using namespace garmnet;

namespace {

struct Raw {
    Tensor<double> logits;   // (n+1) x S x S
    Tensor<double> offsets;  // 2 x S x S
    std::vector<double> glogits;
    std::vector<double> gbox;
};

HeadOutputs<double> outputs_from(const Raw& r) {
    HeadOutputs<double> o;
    o.landmark_logits = r.logits;
    o.landmark_probs = depth_softmax(r.logits);
    o.landmark_spatial = spatial_softmax(r.logits);
    o.landmark_offsets = r.offsets;
    o.garment_logits = r.glogits;
    o.garment_probs = softmax<double>(r.glogits);
    o.garment_box = r.gbox;
    return o;
}

Raw random_raw(std::mt19937_64& rng, std::size_t ch, std::size_t s, std::size_t n_garments) {
    std::normal_distribution<double> n(0.0, 1.5);
    Raw r{Tensor<double>({ch, s, s}), Tensor<double>({2, s, s}), std::vector<double>(n_garments), std::vector<double>(4)};
    for (auto& v : r.logits.vec()) v = n(rng);
    for (auto& v : r.offsets.vec()) v = 4 * n(rng);
    for (auto& v : r.glogits) v = n(rng);
    for (auto& v : r.gbox) v = 0.5 + 0.2 * n(rng);
    return r;
}

ExampleTargets random_targets(std::mt19937_64& rng, const AnchorGrid& grid, int n_landmarks, int n_garments) {
    std::uniform_real_distribution<double> pos(0, grid.stride * grid.grid_w);
    std::vector<int> cls(static_cast<std::size_t>(n_landmarks));
    std::iota(cls.begin(), cls.end(), 0);
    std::shuffle(cls.begin(), cls.end(), rng);
    std::vector<ClassPoint> lms;
    const int k = 1 + int(rng() % 6);
    for (int i = 0; i < k; ++i) lms.push_back({cls[std::size_t(i)], {pos(rng), pos(rng)}});
    std::vector<Point> pts;
    for (const auto& l : lms) pts.push_back(l.point);
    return make_targets(grid, lms, int(rng() % std::uint64_t(n_garments)), derive_garment_box(pts),
                        BoxCodec{grid.stride * grid.grid_w}, OffsetCodec{}, TargetConfig{}, rng());
}

}  // namespace

TEST(RobustLoss, BranchValues) {
    EXPECT_DOUBLE_EQ(robust_loss(1.0, 1.0), 0.0);
    EXPECT_NEAR(robust_loss(1.3, 1.0), 0.09, 1e-12);
    EXPECT_NEAR(robust_loss(4.0, 2.0), 2.0, 1e-12);
}

TEST(RobustLoss, AbsoluteDifferenceReading) {
    // A large negative error stays in the linear branch rather than being squared.
    EXPECT_NEAR(robust_loss(0.0, 3.0), 3.0, 1e-12);
    EXPECT_NEAR(robust_loss(0.0, 0.3), 0.09, 1e-12);
}

TEST(RobustLoss, EvenNonNegativeAndDiscontinuousAtHalf) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 1000; ++i) {
        const double d = u(rng);
        ASSERT_EQ(robust_loss(d, 0.0), robust_loss(-d, 0.0));
        ASSERT_GE(robust_loss(d, 0.0), 0.0);
    }
    EXPECT_NEAR(robust_loss(0.5 - 1e-12, 0.0), 0.25, 1e-9);
    EXPECT_DOUBLE_EQ(robust_loss(0.5, 0.0), 0.5);
}

TEST(LandmarkRegression, ClosedForms) {
    Tensor<double> pred({2, 3, 3}), target({2, 3, 3});
    LossMask mask{std::vector<std::uint8_t>(9, 0)};
    EXPECT_EQ(landmark_regression_loss(pred, target, mask), 0.0);
    mask.active[4] = 1;
    EXPECT_EQ(landmark_regression_loss(pred, target, mask), 0.0);
    pred[4] = 0.3;
    pred[9 + 4] = 2.0;
    EXPECT_NEAR(landmark_regression_loss(pred, target, mask), (0.09 + 2.0) / 2, 1e-12);
    EXPECT_THROW(landmark_regression_loss(pred, Tensor<double>({2, 2, 2}), mask), std::invalid_argument);
}

TEST(LandmarkClassification, UniformIsLn28) {
    Tensor<double> probs({28, 4, 4}, 1.0 / 28);
    std::vector<int> labels(16, kBackground);
    labels[5] = 7;
    LossMask mask{std::vector<std::uint8_t>(16, 0)};
    EXPECT_EQ(landmark_classification_loss(probs, labels, mask), 0.0);
    mask.active[5] = 1;
    EXPECT_NEAR(landmark_classification_loss(probs, labels, mask), std::log(28.0), 1e-12);
    EXPECT_NEAR(std::log(28.0), 3.3322, 1e-4);
}

TEST(LandmarkClassification, PerfectOneHotNearZero) {
    Tensor<double> probs({28, 2, 2});
    std::vector<int> labels{3, kBackground, 9, kBackground};
    LossMask mask{{1, 1, 1, 1}};
    for (std::size_t p = 0; p < 4; ++p) probs[target_channel(labels[p], 28) * 4 + p] = 1.0;
    EXPECT_LE(landmark_classification_loss(probs, labels, mask), 1e-6);
}

TEST(LandmarkClassification, MaskLinearity) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        Raw r = random_raw(rng, 28, 3, 9);
        const auto probs = depth_softmax(r.logits);
        std::vector<int> labels(9, kBackground);
        labels[1] = int(rng() % 27);
        LossMask a{std::vector<std::uint8_t>(9, 0)}, b = a, both = a;
        a.active[1] = both.active[1] = 1;
        b.active[6] = both.active[6] = 1;
        // Summed (pre-normalisation) form: mean * count.
        const double sa = landmark_classification_loss(probs, labels, a) * 1;
        const double sb = landmark_classification_loss(probs, labels, b) * 1;
        const double sab = landmark_classification_loss(probs, labels, both) * 2;
        EXPECT_NEAR(sab, sa + sb, 1e-12);
    }
}

TEST(SpatialConstraint, UniformPlaneOnTwelveGridIsLn144) {
    const std::size_t s = 12, plane = s * s;
    Tensor<double> depth({28, s, s}, 1.0 / 28);
    Tensor<double> spatial({28, s, s}, 1.0 / plane);
    std::vector<int> labels(plane, kBackground);
    labels[17] = 4;
    LossMask mask{std::vector<std::uint8_t>(plane, 0)};
    mask.active[17] = 1;
    SpatialMask smask{std::vector<std::uint8_t>(27, 0)};
    smask.active_classes[4] = 1;
    EXPECT_NEAR(spatial_cross_entropy(spatial, labels, smask), std::log(144.0), 1e-12);
    EXPECT_NEAR(std::log(144.0), 4.9698, 1e-4);
    const double depth_term = landmark_classification_loss(depth, labels, mask);
    EXPECT_NEAR(spatial_constraint_loss(depth, spatial, labels, mask, smask), 0.5 * (depth_term + std::log(144.0)),
                1e-12);
}

TEST(SpatialConstraint, NoActiveClassesHalvesDepthTerm) {
    std::mt19937_64 rng(3);
    Raw r = random_raw(rng, 28, 4, 9);
    const auto depth = depth_softmax(r.logits), spatial = spatial_softmax(r.logits);
    std::vector<int> labels(16, kBackground);
    labels[2] = 5;
    LossMask mask{std::vector<std::uint8_t>(16, 1)};
    SpatialMask none{std::vector<std::uint8_t>(27, 0)};
    EXPECT_NEAR(spatial_constraint_loss(depth, spatial, labels, mask, none),
                0.5 * landmark_classification_loss(depth, labels, mask), 1e-12);
}

TEST(SpatialConstraint, PerfectPredictionsNearZeroAndNonNegative) {
    const std::size_t s = 3, plane = 9;
    Tensor<double> depth({28, s, s}), spatial({28, s, s});
    std::vector<int> labels(plane, kBackground);
    labels[4] = 2;
    for (std::size_t p = 0; p < plane; ++p) depth[target_channel(labels[p], 28) * plane + p] = 1.0;
    for (std::size_t c = 0; c < 28; ++c) spatial[c * plane + 4] = 1.0;
    LossMask mask{std::vector<std::uint8_t>(plane, 1)};
    SpatialMask smask{std::vector<std::uint8_t>(27, 0)};
    smask.active_classes[2] = 1;
    const double v = spatial_constraint_loss(depth, spatial, labels, mask, smask);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1e-6);
}

TEST(SpatialConstraint, RejectsUnnormalisedInputs) {
    Tensor<double> depth({28, 2, 2}, 0.5), spatial({28, 2, 2}, 0.25);
    std::vector<int> labels(4, kBackground);
    LossMask mask{std::vector<std::uint8_t>(4, 1)};
    SpatialMask smask{std::vector<std::uint8_t>(27, 0)};
    EXPECT_THROW(spatial_constraint_loss(depth, spatial, labels, mask, smask), std::invalid_argument);
}

TEST(SpatialTarget, SplitsMassOverSeveralPositives) {
    const std::vector<int> labels{1, kBackground, 1, 1, kIgnore};
    const auto t = spatial_target(labels, 1);
    EXPECT_NEAR(t[0] + t[2] + t[3], 1.0, 1e-15);
    EXPECT_NEAR(t[0], 1.0 / 3, 1e-15);
    EXPECT_EQ(t[1], 0.0);
}

TEST(GarmentLosses, ClosedForms) {
    const std::vector<double> uniform(9, 1.0 / 9);
    const std::vector<double> box{0.5, 0.5, 0.3, 0.3};
    const auto g = garment_losses(uniform, 2, box, {0.4, 0.6, 0.2, 0.4});
    EXPECT_NEAR(g.cls, std::log(9.0), 1e-12);
    EXPECT_NEAR(std::log(9.0), 2.1972, 1e-4);
    EXPECT_NEAR(g.reg, 0.01, 1e-12);
    std::vector<double> onehot(9, 0.0);
    onehot[2] = 1.0;
    const auto p = garment_losses(onehot, 2, box, {0.5, 0.5, 0.3, 0.3});
    EXPECT_LE(p.cls, 1e-6);
    EXPECT_EQ(p.reg, 0.0);
}

TEST(TotalLoss, WeightedSum) {
    EXPECT_DOUBLE_EQ(total_loss(1, 2, 3, 4, {}).total, 10.0);
    EXPECT_DOUBLE_EQ(total_loss(1, 2, 3, 4, {0, 0, 1, 1}).total, 7.0);
    EXPECT_DOUBLE_EQ(total_loss(1, 2, 3, 4, {1, 1, 0, 0}).total, 3.0);
    EXPECT_THROW(total_loss(1, 2, 3, 4, {-1, 1, 1, 1}), std::invalid_argument);
}

TEST(ExampleLoss, ZeroWeightsGiveExactlyZeroGradients) {
    std::mt19937_64 rng(4);
    const auto grid = make_anchor_grid_for_features(5, 16, 70);
    for (bool sc : {false, true}) {
        const Raw r = random_raw(rng, 28, 5, 9);
        const auto tg = random_targets(rng, grid, 27, 9);
        HeadGrads<double> g;
        compute_example_loss(outputs_from(r), tg, {0, 0, 1, 1}, sc, 27, &g);
        for (double v : g.landmark_logits.vec()) ASSERT_EQ(v, 0.0);
        for (double v : g.landmark_offsets.vec()) ASSERT_EQ(v, 0.0);
        compute_example_loss(outputs_from(r), tg, {1, 1, 0, 0}, sc, 27, &g);
        for (double v : g.garment_logits) ASSERT_EQ(v, 0.0);
        for (double v : g.garment_box) ASSERT_EQ(v, 0.0);
    }
}

// Analytic gradients with respect to every raw head output against central differences.
TEST(ExampleLoss, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(5);
    const auto grid = make_anchor_grid_for_features(5, 16, 70);
    const double h = 1e-6;
    int instances = 0;
    for (int t = 0; t < 24; ++t) {
        const bool sc = t % 2 == 0;
        LossWeights w{1.0 + t % 3, 0.5 + t % 2, 1.0, 2.0};
        const int only = t % 6;  // isolate each loss in turn, then all four together
        if (only < 4) {
            auto a = w.as_array();
            for (int k = 0; k < 4; ++k)
                if (k != only) a[std::size_t(k)] = 0;
            w = {a[0], a[1], a[2], a[3]};
        }
        Raw r = random_raw(rng, 28, 5, 9);
        const auto tg = random_targets(rng, grid, 27, 9);
        HeadGrads<double> g;
        compute_example_loss(outputs_from(r), tg, w, sc, 27, &g);
        auto loss = [&] { return compute_example_loss(outputs_from(r), tg, w, sc, 27).total; };
        double max_rel = 0;
        auto check = [&](double& x, double analytic) {
            const double orig = x;
            x = orig + h;
            const double up = loss();
            x = orig - h;
            const double down = loss();
            x = orig;
            const double numeric = (up - down) / (2 * h);
            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            max_rel = std::max(max_rel, rel);
        };
        for (std::size_t i = 0; i < r.logits.size(); ++i) check(r.logits[i], g.landmark_logits[i]);
        for (std::size_t i = 0; i < r.offsets.size(); ++i) check(r.offsets[i], g.landmark_offsets[i]);
        for (std::size_t i = 0; i < 9; ++i) check(r.glogits[i], g.garment_logits[i]);
        for (std::size_t i = 0; i < 4; ++i) check(r.gbox[i], g.garment_box[i]);
        EXPECT_LT(max_rel, 1e-3) << "instance " << t;
        ++instances;
    }
    EXPECT_GE(instances, 20);
}

TEST(Targets, MaskAndOffsetsConsistent) {
    std::mt19937_64 rng(6);
    const auto grid = make_anchor_grid_for_features(8, 16, 70);
    for (int t = 0; t < 50; ++t) {
        const auto tg = random_targets(rng, grid, 27, 9);
        const std::size_t n = grid.cells();
        ASSERT_EQ(tg.offsets.size(), 2 * n);
        for (std::size_t c = 0; c < n; ++c) {
            if (tg.assignment.positive(c)) {
                ASSERT_EQ(tg.mask.active[c], 1);
                ASSERT_EQ(tg.offsets[c], tg.assignment.target_offset[c].x);
                ASSERT_EQ(tg.offsets[n + c], tg.assignment.target_offset[c].y);
            } else {
                ASSERT_EQ(tg.offsets[c], 0.0);
            }
        }
    }
}
