#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "hsiseg/refiner.hpp"
#include "oracles.hpp"

using namespace hsi;
using hsi::testing::finite_difference;
using hsi::testing::max_relative_error;
using hsi::testing::random_tensor;

namespace {

NetworkSpec fcn(Activation act, std::size_t pools) {
    NetworkSpec s;
    s.layers.push_back({LayerKind::conv3d, 2, {3, 3, 1}, act});
    for (std::size_t i = 0; i < pools; ++i) {
        s.layers.push_back({LayerKind::maxpool, 0, {1, 1, 1}, Activation::identity});
        s.layers.push_back({LayerKind::conv3d, 3 + i, {3, 1, 1}, act});
    }
    s.layers.push_back({LayerKind::softmax, 3, {1, 1, 1}, Activation::identity});
    return s;
}

template <typename T>
std::vector<std::span<T>> arrays(BasicNetworkParams<T>& p) {
    std::vector<std::span<T>> out;
    p.for_each_array(std::function<void(std::span<T>)>([&](std::span<T> a) { out.push_back(a); }));
    return out;
}

template <typename T>
std::vector<std::span<T>> arrays(RefinerParams<T>& p) {
    std::vector<std::span<T>> out;
    p.for_each_array(std::function<void(std::span<T>)>([&](std::span<T> a) { out.push_back(a); }));
    return out;
}

std::vector<double> copy(std::span<const double> s) { return {s.begin(), s.end()}; }

} // namespace

TEST(RefinerSpec, MirrorsPooledStages) {
    const RefinerSpec r = build_refiner(build_network({"indian-pines-seg", 5, 4, 3}));
    ASSERT_EQ(r.stages.size(), 2u);
    EXPECT_EQ(r.channels, 5u);
    EXPECT_EQ(r.stages[0].channels, 4u);
    EXPECT_EQ(r.final_extents, (std::array<std::size_t, 3>{3, 3, 3}));
    EXPECT_EQ(build_refiner(build_network({"synthetic-seg", 3, 4, 3})).stages.size(), 1u);
}

TEST(RefinerSpec, StageOrderDeepestFirst) {
    const RefinerSpec r = build_refiner(fcn(Activation::relu, 2));
    ASSERT_EQ(r.stages.size(), 2u);
    EXPECT_EQ(r.stages[0].channels, 3u);
    EXPECT_EQ(r.stages[1].channels, 2u);
    EXPECT_EQ(r.final_extents, (std::array<std::size_t, 3>{3, 3, 1}));
}

TEST(RefinerSpec, RejectsFullyConnected) {
    EXPECT_THROW(build_refiner(build_network({"synthetic-cls", 3, 4, 3})), ConfigError);
}

TEST(RefinerSpec, PlacementStrings) {
    for (auto p : {RefinerPlacement::none, RefinerPlacement::unary, RefinerPlacement::pairwise}) {
        EXPECT_EQ(refiner_placement_from_string(to_string(p)), p);
    }
    EXPECT_THROW(refiner_placement_from_string("both"), ConfigError);
}

TEST(Refine, IdentityWithoutPools) {
    const NetworkSpec s = fcn(Activation::relu, 0);
    const RefinerSpec r = build_refiner(s);
    EXPECT_TRUE(r.identity());
    const auto rp = init_refiner<float>(r, 1);
    EXPECT_EQ(rp.parameter_count(), 0u);
    std::mt19937_64 rng(1);
    const Tensor logits = random_tensor<float>({4, 4, 2, 3}, rng);
    const auto tr = refine<float>(logits, {}, r, rp);
    EXPECT_EQ(tr.output, logits);
}

TEST(Refine, RestoresInputGrid) {
    const NetworkSpec s = fcn(Activation::relu, 2);
    const RefinerSpec r = build_refiner(s);
    const auto np = init_params<float>(s, {1, 1, 1, 4}, 2);
    const auto rp = init_refiner<float>(r, 3);
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor<float>({9, 6, 3, 4}, rng);
    const auto out = path_forward<float>(s, np, &r, &rp, x);
    EXPECT_EQ(out.net.logits().shape(), (Shape{3, 2, 3, 3}));
    EXPECT_EQ(out.fine.shape(), (Shape{9, 6, 3, 3}));
    const auto plain = path_forward<float>(s, np, nullptr, nullptr, x);
    EXPECT_EQ(plain.fine.shape(), (Shape{9, 6, 3, 3}));
    EXPECT_EQ(plain.fine.at(4, 5, 1, 2), plain.net.logits().at(1, 1, 1, 2));
}

TEST(Refine, ZeroKernelsGiveZeroOutput) {
    const NetworkSpec s = fcn(Activation::relu, 1);
    const RefinerSpec r = build_refiner(s);
    auto rp = init_refiner<float>(r, 4).zeros_like();
    const auto np = init_params<float>(s, {1, 1, 1, 2}, 4);
    std::mt19937_64 rng(4);
    const auto out = path_forward<float>(s, np, &r, &rp, random_tensor<float>({6, 6, 2, 2}, rng));
    for (float v : out.fine.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Refine, InitProfileHalvesPerStep) {
    const RefinerSpec r = build_refiner(fcn(Activation::relu, 1));
    const auto rp = init_refiner<double>(r, 5);
    const auto& k = rp.final.kernels; // (out, 3, 3, 1, in)
    const std::size_t in = k.extent(4);
    for (std::size_t o = 0; o < k.extent(0); ++o)
        for (std::size_t i = 0; i < in; ++i) {
            const double c = k[(((o * 3 + 1) * 3 + 1) * 1) * in + i];
            EXPECT_DOUBLE_EQ(k[(((o * 3 + 0) * 3 + 1) * 1) * in + i], 0.5 * c);
            EXPECT_DOUBLE_EQ(k[(((o * 3 + 2) * 3 + 2) * 1) * in + i], 0.25 * c);
        }
}

TEST(Refine, RecordCountMismatch) {
    const RefinerSpec r = build_refiner(fcn(Activation::relu, 1));
    const auto rp = init_refiner<float>(r, 6);
    EXPECT_THROW(refine<float>(Tensor(Shape{2, 2, 1, 3}), {}, r, rp), ArgumentError);
}

class PathGradient : public ::testing::TestWithParam<bool> {};

TEST_P(PathGradient, FiniteDifference) {
    const bool with_refiner = GetParam();
    const NetworkSpec s = fcn(Activation::sigmoid, 1);
    const RefinerSpec r = build_refiner(s);
    auto np = init_params<double>(s, {1, 1, 1, 2}, 7);
    auto rp = init_refiner<double>(r, 8);
    std::mt19937_64 rng(9);
    // Shift the stage biases so the ReLU stays away from its kink.
    for (auto& st : rp.stages)
        for (auto& b : st.biases) b = 0.3;
    const BasicTensor<double> x = random_tensor<double>({4, 4, 2, 2}, rng);
    const std::vector<double> w = hsi::testing::random_vector<double>(4 * 4 * 2 * 3, rng);
    const RefinerSpec* rs = with_refiner ? &r : nullptr;
    const RefinerParams<double>* rpp = with_refiner ? &rp : nullptr;
    auto loss = [&]() { return hsi::testing::weighted_sum(path_forward<double>(s, np, rs, rpp, x).fine.data(), w); };
    const auto out = path_forward<double>(s, np, rs, rpp, x);
    BasicTensor<double> g(out.fine.shape());
    std::copy(w.begin(), w.end(), g.data().begin());
    auto grads = path_backward<double>(s, np, rs, rpp, out, g);

    auto ps = arrays(np);
    auto gs = arrays(grads.net);
    for (std::size_t a = 0; a < ps.size(); ++a) {
        EXPECT_LE(max_relative_error(copy(gs[a]), finite_difference(loss, ps[a], 1e-5)), 1e-4) << "net array " << a;
    }
    if (with_refiner) {
        ASSERT_TRUE(grads.refiner.has_value());
        auto rps = arrays(rp);
        auto rgs = arrays(*grads.refiner);
        ASSERT_EQ(rps.size(), rgs.size());
        for (std::size_t a = 0; a < rps.size(); ++a) {
            EXPECT_LE(max_relative_error(copy(rgs[a]), finite_difference(loss, rps[a], 1e-5)), 1e-4)
                << "refiner array " << a;
        }
    } else {
        EXPECT_FALSE(grads.refiner.has_value());
    }
}

INSTANTIATE_TEST_SUITE_P(Refiner, PathGradient, ::testing::Values(false, true));

TEST(RefinerCheckpoint, RoundTripAndCorruption) {
    const RefinerSpec r = build_refiner(fcn(Activation::relu, 2));
    const auto p = init_refiner<float>(r, 21);
    const auto path = std::filesystem::temp_directory_path() / "hsiseg_refiner.hrfn";
    write_refiner(p, path);
    EXPECT_EQ(read_refiner(r, path), p);
    const std::string bytes = refiner_bytes(p);
    EXPECT_EQ(bytes.substr(0, 4), "HRFN");

    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 2);
    EXPECT_THROW(read_refiner(r, path), TruncatedError);
    std::ofstream(path, std::ios::binary) << bytes << "x";
    EXPECT_THROW(read_refiner(r, path), CorruptionError);
    std::ofstream(path, std::ios::binary) << "HCNN" << bytes.substr(4);
    EXPECT_THROW(read_refiner(r, path), BadMagicError);
    EXPECT_THROW(read_refiner(build_refiner(fcn(Activation::relu, 1)), std::filesystem::temp_directory_path() /
                                                                          "hsiseg_refiner_missing.hrfn"),
                 IoError);
}
