#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hsiseg/raster.hpp"

namespace hsi {

struct SceneSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t bands = 40;
    std::size_t num_classes = 3;
    std::size_t blob_count = 8;
    double noise_sigma = 0.03;
    std::uint64_t seed = 42;
};

struct SyntheticScene {
    HyperCube cube;
    LabelMap truth;
    /// Noise-free spectrum of each class, index 0 holding class 1.
    std::vector<std::vector<float>> signatures;
};

/// Voronoi regions around seeded blob centres, one smooth spectral signature per
/// class (a sum of Gaussian bumps over the band index) plus i.i.d. pixel noise.
/// Every class covers at least 1% of the pixels.
SyntheticScene synth_scene(const SceneSpec& spec);

} // namespace hsi
