#include <gtest/gtest.h>

#include <random>

#include "garmnet/training.hpp"

using namespace garmnet;

namespace {

NetworkConfig tiny_config(int input, Variant v = Variant::garmnet, bool sc = true) {
    NetworkConfig c;
    c.variant = v;
    c.backbone.input_size = input;
    c.backbone.tiny_channels = {8, 8, 8, 8};
    c.head_channels = 16;
    c.hidden_units = 12;
    c.box_side = 26;
    c.spatial_constraint = sc;
    return c;
}

Tensor<double> random_image(std::size_t side, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, 1);
    Tensor<double> t({3, side, side});
    for (auto& v : t.vec()) v = n(rng);
    return t;
}

bool all_zero(const Tensor<double>& t) {
    for (double v : t.vec())
        if (v != 0.0) return false;
    return true;
}

}  // namespace

TEST(Network, OutputShapesFollowGrid) {
    for (auto [input, s] : {std::pair{64, 4}, std::pair{112, 7}, std::pair{224, 14}}) {
        for (Variant v : {Variant::garmnet, Variant::garmnet_b}) {
            GarmNet<double> net(tiny_config(input, v));
            init_parameters(net, 1);
            ASSERT_EQ(net.grid_size(), s);
            EXPECT_DOUBLE_EQ(net.stride(), double(input) / s);
            const auto out = net.forward(random_image(std::size_t(input), 2));
            const Shape lm{28, std::size_t(s), std::size_t(s)};
            EXPECT_EQ(out.landmark_logits.shape(), lm);
            EXPECT_EQ(out.landmark_probs.shape(), lm);
            EXPECT_EQ(out.landmark_spatial.shape(), lm);
            EXPECT_EQ(out.landmark_offsets.shape(), (Shape{2, std::size_t(s), std::size_t(s)}));
            EXPECT_EQ(out.garment_probs.size(), 9u);
            EXPECT_EQ(out.garment_box.size(), 4u);
            const std::size_t feat = std::size_t(s * s * 8);
            EXPECT_EQ(net.garment_input_size(), v == Variant::garmnet ? feat : feat + std::size_t(s * s * 28));
            EXPECT_EQ(net.anchor_grid().cells(), std::size_t(s * s));
        }
    }
}

TEST(Network, LandmarkHeadParameterCountForDeepFeatures) {
    NetworkConfig c;
    c.backbone = BackboneConfig::resnet50(224);
    GarmNet<float> net(c);
    EXPECT_EQ(net.feature_depth(), 1024);
    EXPECT_EQ(net.grid_size(), 14);
    std::size_t head = 0;
    for (const auto* p : net.parameters())
        if (p->name.rfind("landmark_head.", 0) == 0) head += p->value.size();
    // 3x3 conv to 256 channels, then 1x1 convs to 28 scores and 2 offsets.
    const std::size_t expected = (1024 * 9 * 256 + 256) + (256 * 28 + 28) + (256 * 2 + 2);
    EXPECT_EQ(head, expected);
    EXPECT_EQ(net.garment_input_size(), std::size_t(14 * 14 * 1024));
}

TEST(Network, TinyBackboneGrid) {
    EXPECT_EQ(GarmNet<double>(tiny_config(64)).grid_size(), 4);
    EXPECT_EQ(GarmNet<double>(tiny_config(128)).grid_size(), 8);
    NetworkConfig c = tiny_config(128);
    c.backbone.tiny_channels = {};
    EXPECT_THROW(GarmNet<double>{c}, std::invalid_argument);
    c.backbone.tiny_channels = {8, 65};
    EXPECT_THROW(GarmNet<double>{c}, std::invalid_argument);
}

TEST(Network, RejectsWrongInputSize) {
    GarmNet<double> net(tiny_config(64));
    EXPECT_THROW(net.forward(random_image(65, 1)), std::invalid_argument);
}

TEST(Network, SoftmaxViewsAreNormalised) {
    GarmNet<double> net(tiny_config(112));
    init_parameters(net, 3, {0.3, 0.0});
    const auto out = net.forward(random_image(112, 4));
    const std::size_t plane = 49;
    for (std::size_t p = 0; p < plane; ++p) {
        double s = 0;
        for (std::size_t c = 0; c < 28; ++c) s += out.landmark_probs[c * plane + p];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    for (std::size_t c = 0; c < 28; ++c) {
        double s = 0;
        for (std::size_t p = 0; p < plane; ++p) s += out.landmark_spatial[c * plane + p];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    double g = 0;
    for (double v : out.garment_probs) g += v;
    EXPECT_NEAR(g, 1.0, 1e-12);
}

TEST(Network, SpatialViewOmittedWithoutConstraint) {
    GarmNet<double> net(tiny_config(64, Variant::garmnet, false));
    init_parameters(net, 1);
    EXPECT_TRUE(net.forward(random_image(64, 1)).landmark_spatial.empty());
}

TEST(Network, InitialisationIsDeterministic) {
    GarmNet<double> a(tiny_config(64, Variant::garmnet_b)), b(tiny_config(64, Variant::garmnet_b));
    init_parameters(a, 42);
    init_parameters(b, 42);
    const auto img = random_image(64, 5);
    const auto oa = a.forward(img), ob = b.forward(img);
    EXPECT_EQ(oa.landmark_logits.vec(), ob.landmark_logits.vec());
    EXPECT_EQ(oa.landmark_offsets.vec(), ob.landmark_offsets.vec());
    EXPECT_EQ(oa.garment_logits, ob.garment_logits);
    EXPECT_EQ(oa.garment_box, ob.garment_box);
    GarmNet<double> c(tiny_config(64, Variant::garmnet_b));
    init_parameters(c, 43);
    EXPECT_NE(c.forward(img).landmark_logits.vec(), oa.landmark_logits.vec());
}

TEST(Network, InitialisationDrawsKernelsAndFillsBiases) {
    NetworkConfig cfg = tiny_config(64);
    cfg.head_channels = 64;
    cfg.hidden_units = 256;
    GarmNet<double> net(cfg);
    init_parameters(net, 9);
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (const auto* p : net.parameters()) {
        if (p->kind == ParamKind::bias) {
            for (double v : p->value.vec()) ASSERT_EQ(v, 1.0);
        } else if (p->kind == ParamKind::kernel) {
            for (double v : p->value.vec()) {
                sum += v;
                sq += v * v;
                ++n;
            }
        }
    }
    const double mean = sum / double(n), sd = std::sqrt(sq / double(n) - mean * mean);
    EXPECT_GT(n, 10000u);
    EXPECT_NEAR(mean, 0.0, 5 * 0.01 / std::sqrt(double(n)));
    EXPECT_NEAR(sd, 0.01, 0.01 * 0.05);
}

// The bridge feeds landmark probabilities forward but carries no gradient back.
TEST(Network, BridgeIsOneWay) {
    GarmNet<double> net(tiny_config(64, Variant::garmnet_b));
    init_parameters(net, 6, {0.2, 0.05});
    typename GarmNet<double>::Cache cache;
    const auto out = net.forward(random_image(64, 7), &cache);
    HeadGrads<double> g;
    g.garment_logits.assign(9, 0.3);
    g.garment_box.assign(4, -0.7);
    net.zero_grad();
    net.backward(cache, g);
    bool backbone_moved = false;
    for (const auto* p : net.parameters()) {
        if (p->name.rfind("landmark_head.", 0) == 0) EXPECT_TRUE(all_zero(p->grad)) << p->name;
        if (p->name.rfind("backbone.", 0) == 0 && !all_zero(p->grad)) backbone_moved = true;
    }
    EXPECT_TRUE(backbone_moved);

    g = {};
    g.landmark_logits = Tensor<double>(out.landmark_logits.shape(), 0.1);
    g.landmark_offsets = Tensor<double>(out.landmark_offsets.shape(), 0.1);
    net.zero_grad();
    net.backward(cache, g);
    for (const auto* p : net.parameters())
        if (p->name.rfind("garment_head.", 0) == 0) EXPECT_TRUE(all_zero(p->grad)) << p->name;
}

TEST(Network, BridgeChangesGarmentOutputOnlyWhenEnabled) {
    for (Variant v : {Variant::garmnet, Variant::garmnet_b}) {
        GarmNet<double> net(tiny_config(64, v));
        init_parameters(net, 8, {0.2, 0.05});
        const auto img = random_image(64, 9);
        const auto before = net.forward(img);
        for (auto* p : net.parameters())
            if (p->name == "landmark_head.cls.weight")
                for (double& w : p->value.vec()) w *= 3;
        const auto after = net.forward(img);
        if (v == Variant::garmnet)
            EXPECT_EQ(before.garment_logits, after.garment_logits);
        else
            EXPECT_NE(before.garment_logits, after.garment_logits);
    }
}

TEST(Network, FrozenBackboneReceivesNoGradient) {
    NetworkConfig cfg = tiny_config(64);
    cfg.backbone.finetune = false;
    GarmNet<double> net(cfg);
    init_parameters(net, 1, {0.2, 0.05});
    typename GarmNet<double>::Cache cache;
    const auto out = net.forward(random_image(64, 2), &cache);
    HeadGrads<double> g{Tensor<double>(out.landmark_logits.shape(), 0.1),
                        Tensor<double>(out.landmark_offsets.shape(), 0.1), std::vector<double>(9, 0.1),
                        std::vector<double>(4, 0.1)};
    net.zero_grad();
    net.backward(cache, g);
    for (const auto* p : net.parameters())
        if (p->name.rfind("backbone.", 0) == 0) EXPECT_TRUE(all_zero(p->grad)) << p->name;
}

TEST(Decode, AnchorPlusOffset) {
    NetworkConfig cfg = tiny_config(64);
    const auto grid = make_anchor_grid_for_features(4, 16, 26);
    const std::size_t plane = 16, cell = grid.index(2, 3);
    ASSERT_EQ(grid.anchor_points[cell], (Point{48, 32}));
    HeadOutputs<double> out;
    out.landmark_logits = Tensor<double>({28, 4, 4});
    for (std::size_t p = 0; p < plane; ++p) out.landmark_logits[27 * plane + p] = 10;  // background everywhere
    out.landmark_logits[27 * plane + cell] = 0;
    out.landmark_logits[5 * plane + cell] = 10;
    out.landmark_probs = depth_softmax(out.landmark_logits);
    out.landmark_offsets = Tensor<double>({2, 4, 4});
    out.landmark_offsets[cell] = 3;
    out.landmark_offsets[plane + cell] = -2;
    out.garment_probs = {0.1, 0.6, 0.3};
    out.garment_box = {0.5, 0.25, 0.5, 0.25};

    cfg.spatial_constraint = false;
    auto ps = decode_predictions(out, grid, cfg);
    ASSERT_EQ(ps.landmarks.size(), 1u);
    EXPECT_EQ(ps.landmarks[0].class_id, 5);
    EXPECT_EQ(ps.landmarks[0].point, (Point{51, 30}));
    EXPECT_EQ(ps.garment.class_id, 1);
    EXPECT_NEAR(ps.garment.box.x_min, 16, 1e-12);
    EXPECT_NEAR(ps.garment.box.y_min, 8, 1e-12);
    EXPECT_NEAR(ps.garment.box.x_max, 48, 1e-12);
    EXPECT_NEAR(ps.garment.box.y_max, 24, 1e-12);

    cfg.normalize_offsets = true;
    ps = decode_predictions(out, grid, cfg);
    ASSERT_EQ(ps.landmarks.size(), 1u);
    EXPECT_EQ(ps.landmarks[0].point, (Point{48 + 48, 32 - 32}));

    // With the spatial view the confidence is the mean of both softmaxes.
    cfg.normalize_offsets = false;
    cfg.spatial_constraint = true;
    ps = decode_predictions(out, grid, cfg);
    const auto spatial = spatial_softmax(out.landmark_logits);
    ASSERT_EQ(ps.landmarks.size(), 1u);
    EXPECT_NEAR(ps.landmarks[0].confidence,
                (out.landmark_probs[5 * plane + cell] + spatial[5 * plane + cell]) / 2, 1e-12);
}

TEST(Decode, ThresholdSuppressesWeakCells) {
    const auto grid = make_anchor_grid_for_features(4, 16, 26);
    NetworkConfig cfg = tiny_config(64, Variant::garmnet, false);
    HeadOutputs<double> out;
    out.landmark_logits = Tensor<double>({28, 4, 4});  // uniform: 1/28 everywhere
    out.landmark_probs = depth_softmax(out.landmark_logits);
    out.landmark_offsets = Tensor<double>({2, 4, 4});
    out.garment_probs = {1.0};
    out.garment_box = {0.5, 0.5, 0.1, 0.1};
    EXPECT_TRUE(decode_predictions(out, grid, cfg).landmarks.empty());
    cfg.confidence_threshold = 0.0;
    // Ties resolve to the first class, never to background.
    EXPECT_EQ(decode_predictions(out, grid, cfg).landmarks.size(), 16u);
}

TEST(Network, CopyParametersAcrossScalarTypes) {
    GarmNet<double> d(tiny_config(64));
    init_parameters(d, 11, {0.2, 0.05});
    GarmNet<float> f(tiny_config(64));
    f.copy_parameters_from(d);
    const auto img = random_image(64, 12);
    const auto od = d.forward(img);
    const auto of = f.forward(img.cast<float>());
    for (std::size_t i = 0; i < od.landmark_logits.size(); ++i)
        EXPECT_NEAR(od.landmark_logits[i], double(of.landmark_logits[i]), 1e-4);
}
