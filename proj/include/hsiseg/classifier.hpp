#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "hsiseg/network.hpp"
#include "hsiseg/pipeline.hpp"

namespace hsi {

struct SgdConfig {
    double learning_rate = 0.005;
    std::size_t epochs = 600;
    std::size_t batch_size = 100;
    /// Share of each class kept for training; the rest is validation.
    double train_fraction = 0.9;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Learning rate and epoch counts of a dataset preset ("indian-pines", "pavia",
/// "griffith", "synthetic").
struct PresetSchedule {
    double learning_rate;
    std::size_t classification_epochs;
    std::size_t segmentation_epochs;
};
PresetSchedule preset_schedule(const std::string& dataset);

struct LossCurve {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
};

struct GroupModel {
    NetworkParams params;
    LossCurve curve;
};

using GroupModels = std::map<std::size_t, GroupModel>;

/// Mini-batch SGD on mean cross-entropy for one network. Labels are 1-based class ids.
/// The per-batch gradient is reduced in sample order, so results do not depend on
/// the thread count.
GroupModel train_network(const NetworkSpec& spec, NetworkParams init, const std::vector<const Tensor*>& train_x,
                         const std::vector<std::uint16_t>& train_y, const std::vector<const Tensor*>& val_x,
                         const std::vector<std::uint16_t>& val_y, const SgdConfig& sgd);

/// One CNN per band group. Each group's real patches are split train/val, the
/// training part optionally augmented, then trained from a group-seeded init.
GroupModels train_group_cnns(const std::vector<LabeledPatch>& patches, const NetworkSpec& spec, const SgdConfig& sgd,
                             const std::optional<AugmentConfig>& augment = std::nullopt);

/// Voxel features on the pixel grid: values (H, W, G, C) with the band-group index
/// as z. Flattening a pixel gives its C * G channels group-major.
struct FeatureMap {
    Tensor values;
    std::vector<BandRange> groups;

    std::size_t height() const { return values.extent(0); }
    std::size_t width() const { return values.extent(1); }
    std::size_t depth() const { return values.extent(2); }
    std::size_t channels() const { return values.extent(3); }
};

struct Classification {
    LabelMap labels;
    /// (H, W, K) posteriors averaged across groups.
    BasicTensor<float> posteriors;
};

struct ClassifierOutputs {
    Classification classification;
    FeatureMap features;
};

/// Runs every group CNN on every pixel's patch.
ClassifierOutputs run_group_cnns(const HyperCube& cube, const BandGroupSet& groups, const GroupModels& models,
                                 const NetworkSpec& spec);

Classification classify_pixels(const HyperCube& cube, const BandGroupSet& groups, const GroupModels& models,
                               const NetworkSpec& spec);

FeatureMap extract_feature_map(const HyperCube& cube, const BandGroupSet& groups, const GroupModels& models,
                               const NetworkSpec& spec);

} // namespace hsi
