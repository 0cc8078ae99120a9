#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "hsiseg/classifier.hpp"

using namespace hsi;

namespace {

NetworkSpec tiny_spec(std::size_t classes) {
    NetworkSpec s;
    s.layers = {{LayerKind::conv3d, 3, {3, 3, 3}, Activation::relu},
                {LayerKind::maxpool, 0, {1, 1, 1}, Activation::identity},
                {LayerKind::fully_connected, 6, {1, 1, 1}, Activation::relu},
                {LayerKind::softmax, classes, {1, 1, 1}, Activation::identity}};
    return s;
}

// Class 1 pixels have spectrum +level, class 2 pixels -level, with small noise.
std::vector<LabeledPatch> separable_patches(std::size_t per_class, std::size_t groups, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.05f);
    std::vector<LabeledPatch> out;
    for (std::size_t g = 0; g < groups; ++g)
        for (std::uint16_t label = 1; label <= 2; ++label)
            for (std::size_t i = 0; i < per_class; ++i) {
                LabeledPatch p;
                p.data = Tensor(Shape{3, 3, 4, 1});
                for (auto& v : p.data.data()) v = (label == 1 ? 1.0f : -1.0f) + noise(rng);
                p.group_index = g;
                p.label = label;
                out.push_back(std::move(p));
            }
    return out;
}

std::pair<HyperCube, LabelMap> two_region_cube() {
    HyperCube cube(6, 8, 8);
    LabelMap truth(6, 8);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 8; ++c) {
            const bool left = c < 4;
            truth.at(r, c) = left ? 1 : 2;
            for (std::size_t b = 0; b < 8; ++b) cube.at(r, c, b) = left ? 1.0f : -1.0f;
        }
    return {cube, truth};
}

} // namespace

TEST(Schedule, PresetValues) {
    EXPECT_DOUBLE_EQ(preset_schedule("indian-pines").learning_rate, 0.003);
    EXPECT_EQ(preset_schedule("indian-pines").classification_epochs, 700u);
    EXPECT_DOUBLE_EQ(preset_schedule("pavia").learning_rate, 0.01);
    EXPECT_EQ(preset_schedule("pavia").classification_epochs, 600u);
    EXPECT_DOUBLE_EQ(preset_schedule("griffith").learning_rate, 0.005);
    EXPECT_EQ(preset_schedule("griffith").classification_epochs, 600u);
    EXPECT_EQ(preset_schedule("synthetic").segmentation_epochs, 500u);
    EXPECT_THROW(preset_schedule("salinas"), ConfigError);
}

TEST(Training, SeparableSetReachesFullTrainAccuracy) {
    const auto patches = separable_patches(10, 1, 1);
    const NetworkSpec spec = tiny_spec(2);
    SgdConfig sgd;
    sgd.epochs = 200;
    sgd.batch_size = 10;
    sgd.learning_rate = 0.05;
    sgd.train_fraction = 1.0;
    const GroupModels models = train_group_cnns(patches, spec, sgd);
    ASSERT_EQ(models.size(), 1u);
    std::size_t correct = 0;
    for (const auto& p : patches) {
        const auto logits = forward(spec, models.at(0).params, p.data).logits();
        correct += std::size_t(logits[p.label - 1] > logits[2 - p.label]);
    }
    EXPECT_EQ(correct, patches.size());
    EXPECT_LT(models.at(0).curve.train_loss.back(), models.at(0).curve.train_loss.front());
}

TEST(Training, ZeroEpochsKeepsInitialization) {
    const auto patches = separable_patches(4, 2, 2);
    const NetworkSpec spec = tiny_spec(2);
    SgdConfig sgd;
    sgd.epochs = 0;
    const GroupModels models = train_group_cnns(patches, spec, sgd);
    for (const auto& [g, m] : models) {
        EXPECT_EQ(m.params, init_params<float>(spec, {3, 3, 4, 1}, sgd.seed + 1000003ULL * (g + 1)));
        EXPECT_TRUE(m.curve.train_loss.empty());
    }
}

TEST(Training, SameSeedSameCurves) {
    const auto patches = separable_patches(8, 2, 3);
    const NetworkSpec spec = tiny_spec(2);
    SgdConfig sgd;
    sgd.epochs = 5;
    sgd.batch_size = 4;
    sgd.learning_rate = 0.02;
    AugmentConfig aug;
    const GroupModels a = train_group_cnns(patches, spec, sgd, aug);
    const GroupModels b = train_group_cnns(patches, spec, sgd, aug);
    for (const auto& [g, m] : a) {
        EXPECT_EQ(m.curve.train_loss, b.at(g).curve.train_loss);
        EXPECT_EQ(m.curve.val_loss, b.at(g).curve.val_loss);
        EXPECT_EQ(m.params, b.at(g).params);
        EXPECT_EQ(m.curve.train_loss.size(), 5u);
        for (double v : m.curve.train_loss) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(Training, MissingClassInGroupRejected) {
    auto patches = separable_patches(3, 2, 4);
    std::erase_if(patches, [](const LabeledPatch& p) { return p.group_index == 1 && p.label == 2; });
    SgdConfig sgd;
    sgd.epochs = 1;
    EXPECT_THROW(train_group_cnns(patches, tiny_spec(2), sgd), ArgumentError);
}

TEST(Training, DivergenceAborts) {
    auto patches = separable_patches(3, 1, 5);
    patches[0].data[0] = std::numeric_limits<float>::quiet_NaN();
    SgdConfig sgd;
    sgd.epochs = 2;
    sgd.train_fraction = 1.0;
    EXPECT_THROW(train_group_cnns(patches, tiny_spec(2), sgd), NumericError);
}

TEST(Training, LabelOutsideHeadRejected) {
    auto patches = separable_patches(3, 1, 6);
    for (auto& p : patches) p.label = std::uint16_t(p.label + 1);
    SgdConfig sgd;
    sgd.epochs = 1;
    EXPECT_THROW(train_group_cnns(patches, tiny_spec(2), sgd), ArgumentError);
}

TEST(Classify, SingleGroupIsArgmaxOfSoftmax) {
    const auto [cube, truth] = two_region_cube();
    const BandGroupSet groups = split_band_groups(8, 8);
    const NetworkSpec spec = tiny_spec(2);
    GroupModels models;
    models[0].params = init_params<float>(spec, {3, 3, 8, 1}, 17);
    const Classification cls = classify_pixels(cube, groups, models, spec);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 8; ++c) {
            const auto tr = forward(spec, models[0].params, extract_patch(cube, groups.groups[0], {r, c}, {3, 3}));
            const auto p = softmax<float>(tr.logits().data());
            const std::size_t pix = r * 8 + c;
            EXPECT_EQ(cls.labels.labels[pix], p[1] > p[0] ? 2 : 1);
            EXPECT_NEAR(cls.posteriors[pix * 2], p[0], 1e-6);
            EXPECT_NEAR(cls.posteriors[pix * 2] + cls.posteriors[pix * 2 + 1], 1.0, 1e-6);
        }
}

TEST(Classify, IdenticalGroupsAverageUnchanged) {
    const auto [cube, truth] = two_region_cube();
    const NetworkSpec spec = tiny_spec(2);
    GroupModels one, two;
    one[0].params = init_params<float>(spec, {3, 3, 4, 1}, 8);
    two[0] = one[0];
    two[1] = one[0];
    HyperCube doubled = cube;  // both halves of the spectrum are constant, so groups see the same data
    const Classification a = classify_pixels(doubled, split_band_groups(8, 4), two, spec);
    HyperCube half(6, 8, 4);
    for (std::size_t i = 0; i < half.values.size(); ++i) half.values[i] = cube.values[(i / 4) * 8 + i % 4];
    const Classification b = classify_pixels(half, split_band_groups(4, 4), one, spec);
    EXPECT_EQ(a.labels, b.labels);
    for (std::size_t i = 0; i < a.posteriors.size(); ++i) EXPECT_NEAR(a.posteriors[i], b.posteriors[i], 1e-7);
}

TEST(Classify, MissingGroupParams) {
    const auto [cube, truth] = two_region_cube();
    const NetworkSpec spec = tiny_spec(2);
    GroupModels models;
    models[0].params = init_params<float>(spec, {3, 3, 4, 1}, 8);
    EXPECT_THROW(classify_pixels(cube, split_band_groups(8, 4), models, spec), ArgumentError);
}

TEST(Features, GroupMajorLayout) {
    const auto [cube, truth] = two_region_cube();
    const NetworkSpec spec = tiny_spec(2);
    GroupModels models;
    models[0].params = init_params<float>(spec, {3, 3, 4, 1}, 8);
    models[1] = models[0];
    const FeatureMap fm = extract_feature_map(cube, split_band_groups(8, 4), models, spec);
    EXPECT_EQ(fm.values.shape(), (Shape{6, 8, 2, 6}));
    // Pixel channels flatten as C * G entries, group 0 first; identical groups give identical blocks.
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 8; ++c)
            for (std::size_t ch = 0; ch < 6; ++ch) EXPECT_EQ(fm.values.at(r, c, 0, ch), fm.values.at(r, c, 1, ch));
    EXPECT_TRUE(fm.values.all_finite());
}

TEST(Features, TrainedFeaturesSeparateClasses) {
    const auto [cube, truth] = two_region_cube();
    LabelMap sparse = truth;
    const BandGroupSet groups = split_band_groups(8, 4);
    const auto patches = extract_patches(cube, sparse, groups, {3, 3});
    const NetworkSpec spec = tiny_spec(2);
    SgdConfig sgd;
    sgd.epochs = 30;
    sgd.batch_size = 8;
    sgd.learning_rate = 0.05;
    const GroupModels models = train_group_cnns(patches, spec, sgd);
    const FeatureMap fm = extract_feature_map(cube, groups, models, spec);
    const std::size_t C = fm.depth() * fm.channels();
    auto feat = [&](std::size_t pix) { return std::span<const float>(fm.values.data().data() + pix * C, C); };
    double intra = 0, inter = 0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t a = 0; a < truth.size(); ++a)
        for (std::size_t b = a + 1; b < truth.size(); ++b) {
            double d = 0;
            for (std::size_t k = 0; k < C; ++k) d += std::pow(double(feat(a)[k]) - feat(b)[k], 2);
            d = std::sqrt(d);
            if (truth.labels[a] == truth.labels[b]) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    EXPECT_LT(intra / double(n_intra), inter / double(n_inter));
}
