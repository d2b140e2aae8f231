#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "garmnet/checkpoint.hpp"

using namespace garmnet;
namespace fs = std::filesystem;

namespace {

const fs::path kData = GARMNET_TEST_DATA_DIR;

NetworkConfig resnet_config(int input) {
    NetworkConfig c;
    c.backbone = BackboneConfig::resnet50(input);
    c.backbone.pretrained_weights = (kData / "resnet50_conv4x.weights").string();
    return c;
}

}  // namespace

// The trunk must reproduce torchvision's stem + layer1..layer3 given the same weights.
TEST(BackboneReference, MatchesTorchvisionTrunk) {
    if (!fs::exists(kData / "resnet50_conv4x.io")) GTEST_SKIP() << "reference not generated (torchvision missing)";
    const TensorFile io = read_tensor_file(kData / "resnet50_conv4x.io");
    const int input = io.meta.at("input_size").get<int>();
    const Tensor<double>& x = io.tensors.at("input");
    const Tensor<double>& y = io.tensors.at("output");

    Backbone<double> bb(resnet_config(input).backbone);
    GarmNet<double> net(resnet_config(input));
    load_backbone_weights(net, kData / "resnet50_conv4x.weights");
    ASSERT_EQ(net.grid_size(), int(y.dim(1)));

    // Run the trunk through the full network's backbone by reusing its parameters.
    ParamList<double> mine;
    bb.collect(mine);
    const auto theirs = net.parameters();
    for (std::size_t i = 0; i < mine.size(); ++i) mine[i]->value = theirs[i]->value;
    const Tensor<double> out = bb.forward(x);
    ASSERT_EQ(out.shape(), y.shape());
    double max_abs = 0, scale = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        max_abs = std::max(max_abs, std::abs(out[i] - y[i]));
        scale = std::max(scale, std::abs(y[i]));
    }
    EXPECT_LT(max_abs, 1e-9 * std::max(1.0, scale)) << "largest reference activation " << scale;

    Backbone<float> bf(resnet_config(input).backbone);
    ParamList<float> fp;
    bf.collect(fp);
    for (std::size_t i = 0; i < fp.size(); ++i) fp[i]->value = theirs[i]->value.cast<float>();
    const Tensor<float> of = bf.forward(x.cast<float>());
    double max_f = 0;
    for (std::size_t i = 0; i < of.size(); ++i) max_f = std::max(max_f, std::abs(double(of[i]) - y[i]));
    EXPECT_LT(max_f, 1e-3 * std::max(1.0, scale));
}

TEST(BackboneReference, InitialisationLoadsConfiguredWeights) {
    if (!fs::exists(kData / "resnet50_conv4x.weights")) GTEST_SKIP() << "reference not generated";
    GarmNet<float> net(resnet_config(64));
    const TensorFile w = read_tensor_file(kData / "resnet50_conv4x.weights");
    for (auto* p : net.parameters())
        if (p->name == "backbone.layer2.0.bn1.running_var") {
            EXPECT_EQ(p->value[0], 1.0f);  // fresh
        }
    // init_parameters lives with training; the loader alone must fill every backbone tensor.
    load_backbone_weights(net, kData / "resnet50_conv4x.weights");
    for (auto* p : net.parameters()) {
        if (p->name.rfind("backbone.", 0) != 0) continue;
        const auto& src = w.tensors.at(p->name.substr(9));
        ASSERT_EQ(src.shape(), p->value.shape()) << p->name;
        EXPECT_EQ(p->value[0], float(src[0])) << p->name;
    }
}

TEST(BackboneReference, MissingTensorIsReported) {
    const fs::path p = fs::temp_directory_path() / ("garmnet_partial_" + std::to_string(::getpid()) + ".weights");
    TensorFile f;
    f.add("conv1.weight", Tensor<double>({64, 3, 7, 7}));
    write_tensor_file(f, p);
    NetworkConfig c;
    c.backbone = BackboneConfig::resnet50(64);
    GarmNet<float> net(c);
    try {
        load_backbone_weights(net, p);
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("bn1.weight"), std::string::npos) << e.what();
    }
    fs::remove(p);
}
