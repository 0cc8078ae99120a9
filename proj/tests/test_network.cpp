#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "hsiseg/network.hpp"
#include "oracles.hpp"

using namespace hsi;
using hsi::testing::finite_difference;
using hsi::testing::max_relative_error;
using hsi::testing::random_tensor;

namespace {

NetworkSpec small_spec(Activation act, std::size_t classes = 3) {
    NetworkSpec s;
    s.layers = {{LayerKind::conv3d, 2, {3, 3, 3}, act},
                {LayerKind::maxpool, 0, {1, 1, 1}, Activation::identity},
                {LayerKind::conv3d, 3, {3, 3, 1}, act},
                {LayerKind::fully_connected, 4, {1, 1, 1}, act},
                {LayerKind::softmax, classes, {1, 1, 1}, Activation::identity}};
    return s;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("hsiseg_net_" + name);
}

} // namespace

TEST(Presets, ClassificationLayouts) {
    NetworkSpec ip = build_network({"indian-pines-cls", 16});
    EXPECT_EQ(ip.conv_count(), 7u);
    EXPECT_EQ(ip.pooled_conv_layers(), (std::vector<std::size_t>{1, 2, 5, 7}));
    EXPECT_EQ(ip.num_outputs(), 16u);

    for (const char* name : {"pavia-cls", "griffith-cls", "synthetic-cls"}) {
        NetworkSpec s = build_network({name, 9});
        EXPECT_EQ(s.conv_count(), 6u) << name;
        EXPECT_EQ(s.pooled_conv_layers(), (std::vector<std::size_t>{1, 2, 5})) << name;
        EXPECT_EQ(s.layers[s.layers.size() - 2].kind, LayerKind::fully_connected);
    }
}

TEST(Presets, SegmentationLayouts) {
    NetworkSpec ip = build_network({"indian-pines-seg", 4});
    EXPECT_EQ(ip.conv_count(), 4u);
    EXPECT_EQ(ip.pooled_conv_layers(), (std::vector<std::size_t>{1, 4}));
    NetworkSpec pu = build_network({"pavia-seg", 4});
    EXPECT_EQ(pu.conv_count(), 3u);
    EXPECT_EQ(pu.pooled_conv_layers(), (std::vector<std::size_t>{1, 3}));
    NetworkSpec sy = build_network({"synthetic-seg", 9});
    EXPECT_EQ(sy.conv_count(), 3u);
    EXPECT_EQ(sy.pooled_conv_layers(), (std::vector<std::size_t>{1}));
    for (const auto& l : sy.layers) EXPECT_NE(l.kind, LayerKind::fully_connected);
}

TEST(Presets, DefaultKernels) {
    for (const auto& name : preset_names()) {
        NetworkSpec s = build_network({name, 3});
        for (const auto& l : s.layers) {
            if (l.kind != LayerKind::conv3d) continue;
            EXPECT_EQ(l.count, 32u) << name;
            EXPECT_EQ(l.extents, (std::array<std::size_t, 3>{5, 5, 5})) << name;
        }
    }
}

TEST(Presets, UnknownRejected) {
    EXPECT_THROW(build_network({"salinas-cls", 3}), ConfigError);
    EXPECT_THROW(build_network({"pavia-cls", 0}), ConfigError);
}

TEST(Spec, SingleConvRoundTrip) {
    NetworkSpec s;
    s.padding = Padding::valid;
    s.layers = {{LayerKind::conv3d, 5, {3, 1, 7}, Activation::sigmoid},
                {LayerKind::softmax, 4, {1, 1, 1}, Activation::identity}};
    const NetworkSpec back = NetworkSpec::parse(s.serialize());
    EXPECT_EQ(back, s);
    EXPECT_EQ(back.serialize(), s.serialize());
}

TEST(Spec, PresetRoundTrip) {
    for (const auto& name : preset_names()) {
        NetworkSpec s = build_network({name, 5, 8, 3, 16});
        EXPECT_EQ(NetworkSpec::parse(s.serialize()), s) << name;
    }
}

TEST(Spec, InvariantsEnforced) {
    NetworkSpec no_softmax;
    no_softmax.layers = {{LayerKind::conv3d, 2, {3, 3, 3}, Activation::relu}};
    EXPECT_THROW(no_softmax.validate(), ConfigError);
    NetworkSpec no_conv;
    no_conv.layers = {{LayerKind::fully_connected, 2, {1, 1, 1}, Activation::relu},
                      {LayerKind::softmax, 2, {1, 1, 1}, Activation::identity}};
    EXPECT_THROW(no_conv.validate(), ConfigError);
    EXPECT_THROW(NetworkSpec::parse("conv3d 2 4x3x3 relu\nsoftmax 2\n"), ConfigError);
    EXPECT_THROW(NetworkSpec::parse("conv3d two 3x3x3\nsoftmax 2\n"), ConfigError);
    EXPECT_THROW(NetworkSpec::parse("softmax 2\nconv3d 2 3x3x3\nsoftmax 2\n"), ConfigError);
    EXPECT_THROW(NetworkSpec::parse("dropout 0.5\n"), ConfigError);
}

TEST(Params, ShapesFollowSpec) {
    const NetworkSpec s = small_spec(Activation::relu);
    const NetworkParams p = init_params<float>(s, {5, 5, 4, 1}, 7);
    ASSERT_EQ(p.layers.size(), 5u);
    EXPECT_EQ(p.layers[0].conv.kernels.shape(), (Shape{1, 3, 3, 3, 2}));
    EXPECT_EQ(p.layers[2].conv.kernels.shape(), (Shape{2, 3, 3, 1, 3}));
    // Pooled to 3x3x4 with 3 maps.
    EXPECT_EQ(p.layers[3].dense.weights.shape(), (Shape{108, 4}));
    EXPECT_EQ(p.layers[4].conv.kernels.shape(), (Shape{4, 1, 1, 1, 3}));
    EXPECT_EQ(p.parameter_count(), 54u + 2 + 54 + 3 + 432 + 4 + 12 + 3);
    for (float b : p.layers[0].conv.biases) EXPECT_EQ(b, 0.0f);
}

TEST(Params, SeedDeterminism) {
    const NetworkSpec s = small_spec(Activation::relu);
    EXPECT_EQ(init_params<float>(s, {5, 5, 4, 1}, 3), init_params<float>(s, {5, 5, 4, 1}, 3));
    EXPECT_FALSE(init_params<float>(s, {5, 5, 4, 1}, 3) == init_params<float>(s, {5, 5, 4, 1}, 4));
}

TEST(Params, GlorotBounds) {
    const NetworkSpec s = small_spec(Activation::relu);
    const NetworkParams p = init_params<float>(s, {5, 5, 4, 1}, 11);
    const double limit = std::sqrt(6.0 / (108.0 + 4.0));
    for (float w : p.layers[3].dense.weights.data()) EXPECT_LE(std::abs(w), limit);
}

TEST(Forward, ShapesAndFeatures) {
    const NetworkSpec s = small_spec(Activation::relu);
    const NetworkParams p = init_params<float>(s, {5, 5, 4, 1}, 1);
    std::mt19937_64 rng(2);
    const auto tr = forward(s, p, random_tensor<float>({5, 5, 4, 1}, rng));
    EXPECT_EQ(tr.logits().shape(), (Shape{1, 1, 1, 3}));
    EXPECT_EQ(tr.features().shape(), (Shape{1, 1, 1, 4}));
    EXPECT_EQ(tr.pool_records().size(), 1u);
    EXPECT_EQ(tr.pool_records()[0]->input_shape, (Shape{5, 5, 4, 2}));
}

TEST(Forward, WrongInputShape) {
    const NetworkSpec s = small_spec(Activation::relu);
    const NetworkParams p = init_params<float>(s, {5, 5, 4, 1}, 1);
    EXPECT_THROW(forward(s, p, Tensor(Shape{5, 5, 3, 1})), ShapeError);
}

TEST(Forward, FullyConvolutionalKeepsGrid) {
    const NetworkSpec s = build_network({"synthetic-seg", 9, 3, 3});
    const NetworkParams p = init_params<float>(s, {6, 7, 2, 5}, 1);
    const auto tr = forward(s, p, Tensor(Shape{6, 7, 2, 5}, 0.5f));
    EXPECT_EQ(tr.logits().shape(), (Shape{3, 4, 2, 9}));
}

TEST(Backward, FiniteDifferenceThroughAllLayerKinds) {
    const NetworkSpec s = small_spec(Activation::sigmoid);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 4; ++trial) {
        BasicNetworkParams<double> p = init_params<double>(s, {5, 5, 3, 1}, 100 + trial);
        for (auto& l : p.layers)
            for (auto& b : l.conv.biases) b = 0.1 * double(rng() % 7);
        const BasicTensor<double> x = random_tensor<double>({5, 5, 3, 1}, rng);
        const std::size_t target = trial % 3;
        auto loss = [&]() {
            const auto tr = forward(s, p, x);
            std::vector<double> g(3);
            return softmax_cross_entropy<double>(tr.logits().data(), target, g);
        };
        const auto tr = forward(s, p, x);
        BasicTensor<double> g(tr.logits().shape());
        softmax_cross_entropy<double>(tr.logits().data(), target, g.data());
        const auto grads = backward(s, p, tr, g);

        std::vector<std::span<double>> ps;
        p.for_each_array(std::function<void(std::span<double>)>([&](std::span<double> a) { ps.push_back(a); }));
        std::vector<std::span<const double>> gs;
        grads.params.for_each_array(
            std::function<void(std::span<const double>)>([&](std::span<const double> a) { gs.push_back(a); }));
        ASSERT_EQ(ps.size(), gs.size());
        for (std::size_t a = 0; a < ps.size(); ++a) {
            const auto numeric = finite_difference(loss, ps[a], 1e-5);
            EXPECT_LE(max_relative_error(std::vector<double>(gs[a].begin(), gs[a].end()), numeric), 1e-3)
                << "array " << a << " trial " << trial;
        }
    }
}

TEST(Backward, InputGradient) {
    const NetworkSpec s = small_spec(Activation::sigmoid, 2);
    BasicNetworkParams<double> p = init_params<double>(s, {3, 3, 2, 1}, 9);
    std::mt19937_64 rng(6);
    BasicTensor<double> x = random_tensor<double>({3, 3, 2, 1}, rng);
    auto loss = [&]() {
        std::vector<double> g(2);
        return softmax_cross_entropy<double>(forward(s, p, x).logits().data(), 1, g);
    };
    const auto tr = forward(s, p, x);
    BasicTensor<double> g(tr.logits().shape());
    softmax_cross_entropy<double>(tr.logits().data(), 1, g.data());
    const auto grads = backward(s, p, tr, g, true);
    const auto numeric = finite_difference(loss, x.data(), 1e-5);
    EXPECT_LE(max_relative_error(grads.input.storage(), numeric), 1e-3);
}

TEST(Sgd, StepArithmetic) {
    const NetworkSpec s = small_spec(Activation::relu);
    NetworkParams p = init_params<float>(s, {3, 3, 2, 1}, 1);
    NetworkParams g = p.zeros_like();
    g.layers[4].conv.biases = {1.0f, -2.0f, 0.5f};
    const NetworkParams before = p;
    sgd_step(p, g, 0.1);
    EXPECT_FLOAT_EQ(p.layers[4].conv.biases[0], before.layers[4].conv.biases[0] - 0.1f);
    EXPECT_FLOAT_EQ(p.layers[4].conv.biases[1], before.layers[4].conv.biases[1] + 0.2f);
    EXPECT_EQ(p.layers[0], before.layers[0]);
}

TEST(Checkpoint, RoundTripBitExact) {
    const NetworkSpec s = build_network({"synthetic-cls", 3, 4, 3, 8});
    const NetworkParams p = init_params<float>(s, {7, 7, 6, 1}, 21);
    const auto path = temp_path("rt.hcnn");
    write_checkpoint(s, p, path);
    const auto [s2, p2] = read_checkpoint(path);
    EXPECT_EQ(s2, s);
    EXPECT_EQ(p2, p);
    EXPECT_EQ(checkpoint_bytes(s2, p2), checkpoint_bytes(s, p));
    std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFiles) {
    const NetworkSpec s = small_spec(Activation::relu);
    const NetworkParams p = init_params<float>(s, {3, 3, 2, 1}, 1);
    std::string bytes = checkpoint_bytes(s, p);
    const auto path = temp_path("bad.hcnn");
    auto put = [&](const std::string& b) {
        std::ofstream o(path, std::ios::binary | std::ios::trunc);
        o.write(b.data(), std::streamsize(b.size()));
    };
    put("XCNN" + bytes.substr(4));
    EXPECT_THROW(read_checkpoint(path), BadMagicError);
    put(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_checkpoint(path), TruncatedError);
    put(bytes + "x");
    EXPECT_THROW(read_checkpoint(path), CorruptionError);
    std::filesystem::remove(path);
    EXPECT_THROW(read_checkpoint(path), IoError);
}
