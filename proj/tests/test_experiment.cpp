#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hsiseg/experiment.hpp"

using namespace hsi;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hsiseg_exp_" + name);
    fs::remove_all(p);
    return p;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::size_t count_lines(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

RunConfig tiny_config() {
    return parse_config(R"([data]
height = 16
width = 16
bands = 10
classes = 2
blobs = 4
group_size = 5
patch = 3
train_per_class = 6

[cnn]
kernels = 2
kernel_extent = 3
fc_units = 4
learning_rate = 0.05
epochs = 3
geometric = false

[crf]
kernels = 2
kernel_extent = 3
learning_rate = 0.05
epochs = 2
tile = 6
grid_search = false

[sgd]
seed = 9
)");
}

} // namespace

TEST(Config, DefaultsFollowDatasetSchedule) {
    const RunConfig d = parse_config("");
    EXPECT_EQ(d.dataset, "synthetic");
    EXPECT_DOUBLE_EQ(d.cnn_learning_rate, 0.005);
    EXPECT_EQ(d.batch_size, 100u);
    EXPECT_EQ(d.group_size, 20u);
    EXPECT_EQ(d.placement, RefinerPlacement::pairwise);

    const RunConfig ip = parse_config("[cnn]\ndataset = indian-pines\n");
    EXPECT_DOUBLE_EQ(ip.cnn_learning_rate, 0.003);
    EXPECT_DOUBLE_EQ(ip.crf_learning_rate, 0.003);
    EXPECT_EQ(ip.cnn_epochs, 700u);
    EXPECT_EQ(ip.crf_epochs, 500u);

    const RunConfig pv = parse_config("[cnn]\ndataset = pavia\nepochs = 5\n");
    EXPECT_DOUBLE_EQ(pv.cnn_learning_rate, 0.01);
    EXPECT_EQ(pv.cnn_epochs, 5u);
    EXPECT_EQ(pv.crf_epochs, 500u);
}

TEST(Config, FormatRoundTrips) {
    RunConfig c = tiny_config();
    c.kernel.w2 = 0.1 + 0.2;
    c.theta_gamma = 1.0 / 3.0;
    c.placement = RefinerPlacement::unary;
    const std::string text = format_config(c);
    const RunConfig back = parse_config(text);
    EXPECT_EQ(format_config(back), text);
    EXPECT_EQ(back.kernel.w2, c.kernel.w2);
    EXPECT_EQ(back.theta_gamma, c.theta_gamma);
    EXPECT_EQ(back.placement, RefinerPlacement::unary);
    EXPECT_EQ(back.scene.seed, 9u);
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(parse_config("[cnn]\nkernal = 3\n"), ConfigError);
    EXPECT_THROW(parse_config("[nets]\nkernels = 3\n"), ConfigError);
    EXPECT_THROW(parse_config("kernels = 3\n"), ConfigError);
    EXPECT_THROW(parse_config("[cnn]\nkernels = three\n"), ConfigError);
    EXPECT_THROW(parse_config("[cnn]\ndataset = cifar\n"), ConfigError);
    EXPECT_THROW(parse_config("[refiner]\nplacement = both\n"), ConfigError);
    EXPECT_THROW(parse_config("[sgd]\ntrain_fraction = 1.5\n"), ConfigError);
    EXPECT_THROW(parse_config("[data]\npatch = 4\n"), ConfigError);
    EXPECT_THROW(load_config(temp_dir("missing") / "none.ini"), IoError);
}

TEST(Model, TrainSaveLoadInferRoundTrip) {
    const RunConfig cfg = tiny_config();
    const SyntheticScene scene = synth_scene(cfg.scene);
    const TrainedModel m = train_model(scene.cube, scene.truth, cfg);
    ASSERT_EQ(m.classifier.models.size(), 2u);
    EXPECT_EQ(m.crf.curve.loss.size(), 2u);

    const fs::path a = temp_dir("model_a"), b = temp_dir("model_b");
    save_model(m, a);
    const TrainedModel loaded = load_model(a);
    save_model(loaded, b);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++files;
        if (e.path().extension() == ".csv") continue; // loss logs are not reloaded
        EXPECT_EQ(file_bytes(e.path()), file_bytes(b / e.path().filename())) << e.path().filename();
    }
    EXPECT_GE(files, 9u);
    EXPECT_TRUE(fs::exists(a / "crf_refiner.hrfn"));

    const Inference x = infer(m, scene.cube), y = infer(loaded, scene.cube);
    EXPECT_EQ(x.classification.labels, y.classification.labels);
    EXPECT_EQ(x.segmentation.labels, y.segmentation.labels);
    EXPECT_EQ(x.segmentation.labels.height, 16u);

    // One CSV row per epoch after the header.
    EXPECT_EQ(count_lines(file_bytes(a / "cnn_group_0_loss.csv")), 1u + cfg.cnn_epochs);
    EXPECT_EQ(count_lines(file_bytes(a / "crf_loss.csv")), 1u + cfg.crf_epochs);
    EXPECT_EQ(file_bytes(a / "crf_loss.csv").substr(0, 26), "epoch,train_loss,val_loss\n");
}

TEST(Model, SameSeedSameBytes) {
    const RunConfig cfg = tiny_config();
    const SyntheticScene scene = synth_scene(cfg.scene);
    const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
    save_model(train_model(scene.cube, scene.truth, cfg), a);
    save_model(train_model(scene.cube, scene.truth, cfg), b);
    for (const auto& e : fs::directory_iterator(a)) {
        EXPECT_EQ(file_bytes(e.path()), file_bytes(b / e.path().filename())) << e.path().filename();
    }
}

TEST(Model, LoadErrors) {
    EXPECT_THROW(load_model(temp_dir("empty_model")), IoError);
    const RunConfig cfg = tiny_config();
    const SyntheticScene scene = synth_scene(cfg.scene);
    const fs::path a = temp_dir("corrupt");
    save_model(train_model(scene.cube, scene.truth, cfg), a);
    std::ofstream(a / "band_stats.bin", std::ios::binary) << "XXXX";
    EXPECT_THROW(load_model(a), BadMagicError);
}

TEST(LossCsv, MissingValidationIsNan) {
    LossCurve c;
    c.train_loss = {1.5, 0.25};
    c.val_loss = {2.0};
    EXPECT_EQ(loss_csv(c), "epoch,train_loss,val_loss\n1,1.5,2\n2,0.25,nan\n");
}

TEST(Features, StandardizedPerChannel) {
    FeatureMap fm;
    fm.values = Tensor(Shape{2, 2, 1, 3});
    for (std::size_t i = 0; i < 4; ++i) {
        fm.values[i * 3] = float(i);      // mean 1.5, std sqrt(1.25)
        fm.values[i * 3 + 1] = 7.0f;      // constant
        fm.values[i * 3 + 2] = float(10 * (i % 2));
    }
    const BandStats s = feature_stats(fm);
    EXPECT_DOUBLE_EQ(s.mean[0], 1.5);
    EXPECT_DOUBLE_EQ(s.stddev[0], std::sqrt(1.25));
    EXPECT_DOUBLE_EQ(s.stddev[1], 0.0);
    const FeatureMap z = standardize_features(fm, s);
    EXPECT_NEAR(z.values[0], -1.5 / std::sqrt(1.25), 1e-6);
    EXPECT_EQ(z.values[1], 0.0f);
    EXPECT_EQ(z.values[5], 1.0f);
    EXPECT_THROW(standardize_features(fm, BandStats{{0.0}, {1.0}}), ShapeError);
}
