#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hsiseg/classifier.hpp"
#include "hsiseg/crf.hpp"
#include "hsiseg/synth.hpp"

namespace hsi {

/// Everything a run needs, read from a `key = value` file with [data], [cnn],
/// [crf], [refiner] and [sgd] sections. Learning rates and epoch counts default to
/// the schedule of `cnn.dataset`.
struct RunConfig {
    // [data]
    SceneSpec scene;
    std::size_t group_size = 20;
    std::size_t patch = 11;
    std::size_t train_per_class = 15;
    bool standardize = true;

    // [cnn]
    std::string dataset = "synthetic";
    std::size_t cnn_kernels = 32;
    std::size_t cnn_kernel_extent = 5;
    std::size_t fc_units = 64;
    double cnn_learning_rate = 0.005;
    std::size_t cnn_epochs = 600;
    bool augment = true;
    AugmentConfig augmentation;

    // [crf]
    std::size_t crf_kernels = 32;
    std::size_t crf_kernel_extent = 5;
    double crf_learning_rate = 0.005;
    std::size_t crf_epochs = 500;
    std::size_t tile = 32;
    /// Share of labeled pixels used as CRF training labels; the rest validate the kernel grid.
    double label_fraction = 0.5;
    MeanFieldOptions mean_field;
    KernelParams kernel;
    /// 0 picks 0.1 x the appearance value range.
    double theta_gamma = 0.0;
    /// "features" uses the CNN feature channels in the spectral kernel term, "intensity" the raw bands.
    std::string appearance = "features";
    bool grid_search = true;

    // [refiner]
    RefinerPlacement placement = RefinerPlacement::pairwise;

    // [sgd]
    std::size_t batch_size = 100;
    double train_fraction = 0.9;
    std::uint64_t seed = 42;

    void validate() const;
    SgdConfig cnn_sgd() const;
    SgdConfig crf_sgd() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Every key, in a fixed order, with doubles printed round-trip exact.
std::string format_config(const RunConfig& cfg);

using Logger = std::function<void(const std::string&)>;

struct ClassifierStage {
    BandStats stats;
    BandGroupSet groups;
    NetworkSpec spec;
    GroupModels models;
};

struct CrfStage {
    /// Per-channel mean and std of the training feature map; the potential nets see standardized features.
    BandStats feature_stats;
    PotentialNets nets;
    KernelParams kernel;
    PiecewiseCurve curve;
    /// Validation OA of each kernel setting tried, in grid order.
    std::vector<std::pair<KernelParams, double>> grid;
};

struct TrainedModel {
    RunConfig config;
    ClassifierStage classifier;
    CrfStage crf;
};

/// Band statistics are taken from `cube`; training pixels are sampled from `truth`.
ClassifierStage train_classifier_stage(const HyperCube& cube, const LabelMap& truth, const RunConfig& cfg,
                                       const Logger& log = {});

HyperCube prepare_cube(const HyperCube& cube, const ClassifierStage& stage, const RunConfig& cfg);

/// Appearance values for the spectral kernel term, (H, W, G, S).
Tensor appearance_values(const ClassifierOutputs& outputs, const HyperCube& prepared, const BandGroupSet& groups,
                         const std::string& mode);

CrfStage train_crf_stage(const ClassifierOutputs& outputs, const Tensor& appearance, const LabelMap& truth,
                         const RunConfig& cfg, const Logger& log = {});

/// Zero-variance channels are only centred.
BandStats feature_stats(const FeatureMap& fm);
FeatureMap standardize_features(const FeatureMap& fm, const BandStats& stats);

/// Mean-field segmentation of a classifier feature map with a trained CRF stage.
Segmentation crf_segment(const CrfStage& stage, const FeatureMap& fm, const Tensor& appearance,
                         const MeanFieldOptions& options);

TrainedModel train_model(const HyperCube& cube, const LabelMap& truth, const RunConfig& cfg, const Logger& log = {});

struct Inference {
    Classification classification;
    Segmentation segmentation;
};

Inference infer(const TrainedModel& model, const HyperCube& cube);

/// Files: config.ini, band_stats.bin, cnn_group_<g>.hcnn, cnn_group_<g>_loss.csv,
/// crf_feature_stats.bin, crf_unary.hcnn, crf_pairwise.hcnn, crf_refiner.hrfn (when placed), crf_loss.csv.
void save_model(const TrainedModel& model, const std::filesystem::path& dir);
TrainedModel load_model(const std::filesystem::path& dir);

/// CSV with header `epoch,train_loss,val_loss` and one row per epoch.
std::string loss_csv(const LossCurve& curve);

} // namespace hsi
