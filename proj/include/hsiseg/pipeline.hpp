#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hsiseg/raster.hpp"
#include "hsiseg/tensor.hpp"

namespace hsi {

struct BandRange {
    std::size_t begin = 0;
    std::size_t end = 0; // exclusive
    std::size_t size() const { return end - begin; }
    friend bool operator==(const BandRange&, const BandRange&) = default;
};

/// Contiguous groups of `group_size` neighbouring bands; the last may be shorter.
struct BandGroupSet {
    std::size_t group_size = 0;
    std::vector<BandRange> groups;

    std::size_t count() const { return groups.size(); }
};

BandGroupSet split_band_groups(std::size_t bands, std::size_t group_size);
inline BandGroupSet split_band_groups(const HyperCube& cube, std::size_t group_size) {
    return split_band_groups(cube.bands, group_size);
}

struct PixelCoord {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// An M x N x L sub-cube around one pixel, stored as a (M, N, L, 1) tensor.
struct LabeledPatch {
    Tensor data;
    PixelCoord center;
    std::size_t group_index = 0;
    std::uint16_t label = 0;
};

struct PatchExtent {
    std::size_t rows = 11;
    std::size_t cols = 11;
};

/// Reflect index `i` into [0, n) without repeating the edge sample.
std::ptrdiff_t mirror_index(std::ptrdiff_t i, std::size_t n);

/// The mirror-padded patch of one pixel and band group.
Tensor extract_patch(const HyperCube& cube, const BandRange& bands, PixelCoord center, PatchExtent extent);

/// One patch per labeled pixel per group, ordered by pixel index then group.
std::vector<LabeledPatch> extract_patches(const HyperCube& cube, const LabelMap& labels, const BandGroupSet& groups,
                                          PatchExtent extent);

/// Per-band mean and standard deviation, used to standardise cubes before patching.
struct BandStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

BandStats compute_band_stats(const HyperCube& cube);
HyperCube standardize(const HyperCube& cube, const BandStats& stats);

struct AugmentConfig {
    double alpha_low = 0.7;
    double alpha_high = 1.0;
    /// Noise standard deviation as a fraction of each band's dynamic range.
    double beta_sigma = 0.01;
    bool geometric = true;
    /// Virtual samples generated per real sample of a class.
    std::size_t virtual_per_real = 1;
    std::uint64_t seed = 42;

    void validate() const;
};

/// y = alpha * x_i + (1 - alpha) * x_j + beta with one alpha per sample and beta
/// drawn per element. `band_range` gives each band's dynamic range; when empty
/// the range is taken over the two parents.
LabeledPatch fuse_virtual_sample(const LabeledPatch& x_i, const LabeledPatch& x_j, const AugmentConfig& cfg,
                                 std::mt19937_64& rng, std::span<const double> band_range = {});

/// Counter-clockwise quarter turn of a square patch; the spectral axis is untouched.
Tensor rotate90(const Tensor& patch);
/// Mirror across the vertical axis (columns reversed).
Tensor flip_horizontal(const Tensor& patch);

/// Rotations by 90/180/270 degrees, the flip, and the flip composed with each rotation.
std::vector<LabeledPatch> geometric_augment(const LabeledPatch& patch);

/// Virtual samples for every class of one group, followed by geometric variants of
/// the real and virtual samples when enabled. Real samples come first.
std::vector<LabeledPatch> augment_training_set(const std::vector<LabeledPatch>& real, const AugmentConfig& cfg,
                                               std::span<const double> band_range = {});

struct TrainValSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::string> warnings;
};

/// Stratified split of sample indices; each class is shuffled under `seed`
/// and contributes round(fraction * n) samples to the training side.
TrainValSplit split_train_val(std::span<const std::uint16_t> labels, double fraction, std::uint64_t seed);

/// Picks up to `per_class` labeled pixels of every class under `seed`, in pixel order.
std::vector<PixelCoord> sample_training_pixels(const LabelMap& labels, std::size_t per_class, std::uint64_t seed);

} // namespace hsi
