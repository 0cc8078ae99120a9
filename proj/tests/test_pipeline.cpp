#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "hsiseg/pipeline.hpp"
#include "hsiseg/raster.hpp"
#include "hsiseg/synth.hpp"

using namespace hsi;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "hsiseg_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string u32(std::uint32_t v) { return std::string(reinterpret_cast<const char*>(&v), 4); }

HyperCube random_cube(std::size_t h, std::size_t w, std::size_t b, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    HyperCube cube(h, w, b);
    for (float& v : cube.values) v = d(rng);
    return cube;
}

LabeledPatch constant_patch(float value, std::uint16_t label, std::size_t n = 3, std::size_t L = 2) {
    return {Tensor({n, n, L, 1}, value), {0, 0}, 0, label};
}

} // namespace

TEST(CubeIo, RoundTripIsBitExact) {
    const HyperCube cube = random_cube(4, 3, 5, 1);
    const fs::path p = temp_file("roundtrip.hsc");
    write_cube(cube, p);
    const HyperCube back = read_cube(p);
    EXPECT_EQ(back.height, 4u);
    EXPECT_EQ(back.width, 3u);
    EXPECT_EQ(back.bands, 5u);
    ASSERT_EQ(back.values.size(), cube.values.size());
    EXPECT_EQ(std::memcmp(back.values.data(), cube.values.data(), cube.values.size() * 4), 0);
}

TEST(CubeIo, BadMagic) {
    const fs::path p = temp_file("badmagic.hsc");
    write_bytes(p, "XXXX" + u32(1) + u32(1) + u32(1) + u32(0) + std::string(4, '\0'));
    EXPECT_THROW(read_cube(p), BadMagicError);
}

TEST(CubeIo, TruncatedPayload) {
    const fs::path p = temp_file("truncated.hsc");
    write_bytes(p, "HSC1" + u32(2) + u32(2) + u32(2) + u32(0) + std::string(7 * 4, '\0'));
    EXPECT_THROW(read_cube(p), TruncatedError);
}

TEST(CubeIo, ExtentOverflow) {
    const fs::path p = temp_file("overflow.hsc");
    write_bytes(p, "HSC1" + u32(1u << 20) + u32(1u << 20) + u32(16) + u32(0));
    EXPECT_THROW(read_cube(p), ExtentOverflowError);
}

TEST(LabelIo, RoundTripAndErrors) {
    LabelMap m(3, 2);
    m.labels = {0, 1, 2, 3, 65535, 7};
    const fs::path p = temp_file("labels.lbl");
    write_labels(m, p);
    EXPECT_EQ(read_labels(p), m);

    write_bytes(p, "LBX1" + u32(1) + u32(1) + std::string(2, '\0'));
    EXPECT_THROW(read_labels(p), BadMagicError);
    write_bytes(p, "LBL1" + u32(2) + u32(2) + std::string(6, '\0'));
    EXPECT_THROW(read_labels(p), TruncatedError);
}

TEST(BandGroups, IndianPines200BandGrouping) {
    const auto g = split_band_groups(200, 25);
    ASSERT_EQ(g.count(), 8u);
    for (const auto& r : g.groups) EXPECT_EQ(r.size(), 25u);
}

TEST(BandGroups, SingleGroupAndRemainder) {
    EXPECT_EQ(split_band_groups(10, 10).count(), 1u);
    const auto g = split_band_groups(103, 25);
    std::vector<std::size_t> sizes;
    for (const auto& r : g.groups) sizes.push_back(r.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{25, 25, 25, 25, 3}));
}

TEST(BandGroups, OutOfRangeRejected) {
    EXPECT_THROW(split_band_groups(10, 0), ArgumentError);
    EXPECT_THROW(split_band_groups(10, 11), ArgumentError);
}

TEST(BandGroups, PartitionPropertyOnRandomSizes) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const std::size_t B = 1 + rng() % 300;
        const std::size_t L = 1 + rng() % B;
        const auto g = split_band_groups(B, L);
        EXPECT_EQ(g.count(), (B + L - 1) / L);
        std::vector<int> hits(B, 0);
        for (std::size_t i = 0; i < g.count(); ++i) {
            if (i + 1 < g.count()) EXPECT_EQ(g.groups[i].size(), L);
            for (std::size_t b = g.groups[i].begin; b < g.groups[i].end; ++b) ++hits[b];
        }
        for (int h : hits) EXPECT_EQ(h, 1);
    }
}

TEST(Patches, UnlabeledMapGivesNothing) {
    const HyperCube cube = random_cube(5, 5, 4, 2);
    EXPECT_TRUE(extract_patches(cube, LabelMap(5, 5), split_band_groups(4, 2), {3, 3}).empty());
}

TEST(Patches, OnePatchPerGroup) {
    const HyperCube cube = random_cube(5, 5, 4, 2);
    LabelMap labels(5, 5);
    labels.at(2, 3) = 4;
    const auto patches = extract_patches(cube, labels, split_band_groups(4, 2), {3, 3});
    ASSERT_EQ(patches.size(), 2u);
    EXPECT_EQ(patches[0].group_index, 0u);
    EXPECT_EQ(patches[1].group_index, 1u);
    EXPECT_EQ(patches[1].label, 4);
    EXPECT_EQ(patches[1].data.shape(), (Shape{3, 3, 2, 1}));
    EXPECT_EQ(patches[1].data.at(1, 1, 0, 0), cube.at(2, 3, 2));
}

TEST(Patches, CornerMatchesExplicitMirrorPad) {
    const HyperCube cube = random_cube(4, 6, 3, 5);
    // Explicitly reflect-pad by 2 on each side: padded[i] = cube[reflect(i - 2)] with
    // reflect(-1) = 1, reflect(-2) = 2, reflect(n) = n - 2.
    auto reflect = [](int i, int n) {
        if (i < 0) return -i;
        if (i >= n) return 2 * (n - 1) - i;
        return i;
    };
    const int H = 4, W = 6, pad = 2;
    std::vector<float> padded((H + 2 * pad) * (W + 2 * pad) * 3);
    for (int r = 0; r < H + 2 * pad; ++r)
        for (int c = 0; c < W + 2 * pad; ++c)
            for (int b = 0; b < 3; ++b)
                padded[(r * (W + 2 * pad) + c) * 3 + b] =
                    cube.at(std::size_t(reflect(r - pad, H)), std::size_t(reflect(c - pad, W)), std::size_t(b));

    LabelMap labels(4, 6);
    labels.at(0, 0) = 1;
    labels.at(3, 5) = 2;
    const auto patches = extract_patches(cube, labels, split_band_groups(3, 3), {5, 5});
    ASSERT_EQ(patches.size(), 2u);
    for (const auto& p : patches) {
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 5; ++c)
                for (int b = 0; b < 3; ++b) {
                    const int pr = int(p.center.row) + r, pc = int(p.center.col) + c;
                    EXPECT_EQ(p.data.at(std::size_t(r), std::size_t(c), std::size_t(b), 0),
                              padded[(pr * (W + 2 * pad) + pc) * 3 + b]);
                }
    }
}

TEST(Patches, EvenExtentRejected) {
    const HyperCube cube = random_cube(5, 5, 2, 2);
    LabelMap labels(5, 5, 1);
    EXPECT_THROW(extract_patches(cube, labels, split_band_groups(2, 2), {4, 3}), ArgumentError);
}

TEST(VirtualSample, DegenerateDrawReproducesParent) {
    std::mt19937_64 rng(1);
    std::mt19937_64 data_rng(2);
    std::uniform_real_distribution<float> d(-3.0f, 3.0f);
    LabeledPatch a = constant_patch(0, 2), b = constant_patch(0, 2);
    for (float& v : a.data.data()) v = d(data_rng);
    for (float& v : b.data.data()) v = d(data_rng);
    AugmentConfig cfg;
    cfg.alpha_low = cfg.alpha_high = 1.0;
    cfg.beta_sigma = 0.0;
    const auto y = fuse_virtual_sample(a, b, cfg, rng);
    EXPECT_EQ(y.data, a.data);
    EXPECT_EQ(y.label, 2);
}

TEST(VirtualSample, MidpointOfConstants) {
    std::mt19937_64 rng(1);
    AugmentConfig cfg;
    cfg.alpha_low = cfg.alpha_high = 0.5;
    cfg.beta_sigma = 0.0;
    const auto y = fuse_virtual_sample(constant_patch(2, 1), constant_patch(4, 1), cfg, rng);
    for (float v : y.data.data()) EXPECT_EQ(v, 3.0f);
}

TEST(VirtualSample, MonteCarloMean) {
    std::mt19937_64 rng(9);
    AugmentConfig cfg;
    cfg.alpha_low = 0.4;
    cfg.alpha_high = 0.6;
    cfg.beta_sigma = 0.0;
    const auto xi = constant_patch(10, 1, 1, 1), xj = constant_patch(2, 1, 1, 1);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) sum += fuse_virtual_sample(xi, xj, cfg, rng).data[0];
    const double expect = 0.5 * 10 + 0.5 * 2;
    EXPECT_NEAR(sum / n, expect, 0.02 * expect);
}

TEST(VirtualSample, StaysInConvexHullWithoutNoise) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    AugmentConfig cfg;
    cfg.beta_sigma = 0.0;
    for (int t = 0; t < 50; ++t) {
        LabeledPatch a = constant_patch(0, 3, 3, 4), b = constant_patch(0, 3, 3, 4);
        for (float& v : a.data.data()) v = d(rng);
        for (float& v : b.data.data()) v = d(rng);
        const auto y = fuse_virtual_sample(a, b, cfg, rng);
        EXPECT_EQ(y.label, 3);
        for (std::size_t n = 0; n < y.data.size(); ++n) {
            EXPECT_GE(y.data[n], std::min(a.data[n], b.data[n]));
            EXPECT_LE(y.data[n], std::max(a.data[n], b.data[n]));
        }
    }
}

TEST(VirtualSample, MismatchedParentsRejected) {
    std::mt19937_64 rng(1);
    AugmentConfig cfg;
    EXPECT_THROW(fuse_virtual_sample(constant_patch(1, 1), constant_patch(1, 2), cfg, rng), ArgumentError);
    auto other_group = constant_patch(1, 1);
    other_group.group_index = 1;
    EXPECT_THROW(fuse_virtual_sample(constant_patch(1, 1), other_group, cfg, rng), ArgumentError);
}

TEST(Geometric, SevenDistinctVariantsOfAsymmetricPatch) {
    LabeledPatch p{Tensor({3, 3, 1, 1}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9}), {1, 1}, 0, 5};
    const auto variants = geometric_augment(p);
    ASSERT_EQ(variants.size(), 7u);
    std::set<std::vector<float>> seen{p.data.storage()};
    for (const auto& v : variants) {
        EXPECT_EQ(v.label, 5);
        seen.insert(v.data.storage());
        // Each variant permutes pixel positions.
        auto sorted = v.data.storage();
        std::sort(sorted.begin(), sorted.end());
        EXPECT_EQ(sorted, p.data.storage());
    }
    EXPECT_EQ(seen.size(), 8u);
}

TEST(Geometric, FourQuarterTurnsIsIdentity) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> d(0, 1);
    Tensor t({5, 5, 3, 1});
    for (float& v : t.data()) v = d(rng);
    EXPECT_EQ(rotate90(rotate90(rotate90(rotate90(t)))), t);
}

TEST(Geometric, ConstantPatchStillEmitsSeven) {
    const auto variants = geometric_augment(constant_patch(1.5f, 1));
    ASSERT_EQ(variants.size(), 7u);
    for (const auto& v : variants) EXPECT_EQ(v.data, constant_patch(1.5f, 1).data);
}

TEST(Geometric, NonSquareRejected) {
    LabeledPatch p{Tensor({3, 5, 1, 1}), {0, 0}, 0, 1};
    EXPECT_THROW(geometric_augment(p), ShapeError);
}

TEST(Split, NinetyTen) {
    const std::vector<std::uint16_t> labels(100, 1);
    const auto s = split_train_val(labels, 0.9, 7);
    EXPECT_EQ(s.train.size(), 90u);
    EXPECT_EQ(s.val.size(), 10u);
}

TEST(Split, DeterministicUnderSeed) {
    std::vector<std::uint16_t> labels;
    for (int i = 0; i < 60; ++i) labels.push_back(std::uint16_t(1 + i % 3));
    const auto a = split_train_val(labels, 0.9, 11), b = split_train_val(labels, 0.9, 11);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
}

TEST(Split, Stratified) {
    std::vector<std::uint16_t> labels;
    for (int i = 0; i < 100; ++i) labels.push_back(std::uint16_t(i < 50 ? 1 : 2));
    const auto s = split_train_val(labels, 0.9, 3);
    std::map<int, int> tr, va;
    for (auto i : s.train) ++tr[labels[i]];
    for (auto i : s.val) ++va[labels[i]];
    EXPECT_EQ(tr[1], 45);
    EXPECT_EQ(tr[2], 45);
    EXPECT_EQ(va[1], 5);
    EXPECT_EQ(va[2], 5);
}

TEST(Split, SingletonClassWarnsAndTrains) {
    const std::vector<std::uint16_t> labels{1, 1, 1, 1, 2};
    const auto s = split_train_val(labels, 0.9, 3);
    ASSERT_EQ(s.warnings.size(), 1u);
    EXPECT_NE(std::find(s.train.begin(), s.train.end(), 4u), s.train.end());
    EXPECT_THROW(split_train_val(labels, 1.0, 3), ArgumentError);
}

TEST(Synth, NoiseFreePixelsShareClassSpectrum) {
    SceneSpec spec;
    spec.height = spec.width = 20;
    spec.noise_sigma = 0.0;
    const auto scene = synth_scene(spec);
    for (std::size_t r = 0; r < 20; ++r)
        for (std::size_t c = 0; c < 20; ++c) {
            const auto& sig = scene.signatures[scene.truth.at(r, c) - 1];
            for (std::size_t b = 0; b < spec.bands; ++b) EXPECT_EQ(scene.cube.at(r, c, b), sig[b]);
        }
}

TEST(Synth, SameSeedSameScene) {
    SceneSpec spec;
    spec.height = spec.width = 24;
    const auto a = synth_scene(spec), b = synth_scene(spec);
    EXPECT_EQ(a.cube.values, b.cube.values);
    EXPECT_EQ(a.truth, b.truth);
    spec.seed = 43;
    EXPECT_NE(synth_scene(spec).cube.values, a.cube.values);
}

TEST(Synth, DefaultSceneSeparatesClassMeans) {
    const SceneSpec spec;
    const auto scene = synth_scene(spec);
    std::vector<std::vector<double>> mean(spec.num_classes, std::vector<double>(spec.bands, 0.0));
    std::vector<std::size_t> count(spec.num_classes, 0);
    for (std::size_t r = 0; r < spec.height; ++r)
        for (std::size_t c = 0; c < spec.width; ++c) {
            const std::size_t k = scene.truth.at(r, c) - 1;
            ++count[k];
            for (std::size_t b = 0; b < spec.bands; ++b) mean[k][b] += scene.cube.at(r, c, b);
        }
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        EXPECT_GE(double(count[k]), 0.01 * double(spec.height * spec.width));
        for (double& v : mean[k]) v /= double(count[k]);
    }
    for (std::size_t a = 0; a < spec.num_classes; ++a)
        for (std::size_t b = a + 1; b < spec.num_classes; ++b) {
            double d = 0;
            for (std::size_t i = 0; i < spec.bands; ++i) d += (mean[a][i] - mean[b][i]) * (mean[a][i] - mean[b][i]);
            EXPECT_GE(std::sqrt(d), 5.0 * spec.noise_sigma);
        }
}

TEST(Synth, InfeasibleSpecRejected) {
    SceneSpec spec;
    spec.blob_count = 2;
    EXPECT_THROW(synth_scene(spec), ArgumentError);
    spec.blob_count = 8;
    spec.num_classes = 1;
    EXPECT_THROW(synth_scene(spec), ArgumentError);
}
