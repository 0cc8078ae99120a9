#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hsiseg/error.hpp"

namespace hsi {

/// H x W x B reflectance volume, pixel-major with the bands of a pixel contiguous.
struct HyperCube {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t bands = 0;
    std::vector<float> values;
    /// Optional centre wavelength of each band in metres.
    std::vector<double> band_wavelengths;

    HyperCube() = default;
    HyperCube(std::size_t h, std::size_t w, std::size_t b, float fill = 0.0f)
        : height(h), width(w), bands(b), values(h * w * b, fill) {}

    float& at(std::size_t r, std::size_t c, std::size_t band) { return values[(r * width + c) * bands + band]; }
    float at(std::size_t r, std::size_t c, std::size_t band) const { return values[(r * width + c) * bands + band]; }
    std::span<const float> pixel(std::size_t r, std::size_t c) const {
        return std::span<const float>(values).subspan((r * width + c) * bands, bands);
    }
    std::size_t pixel_count() const { return height * width; }

    void validate() const;
};

inline constexpr std::uint16_t kUnlabeled = 0;

/// Per-pixel class ids; 0 marks an unlabeled pixel and classes count from 1.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint16_t> labels;

    LabelMap() = default;
    LabelMap(std::size_t h, std::size_t w, std::uint16_t fill = kUnlabeled) : height(h), width(w), labels(h * w, fill) {}

    std::uint16_t& at(std::size_t r, std::size_t c) { return labels[r * width + c]; }
    std::uint16_t at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
    std::size_t size() const { return labels.size(); }
    std::uint16_t max_label() const;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

void require_same_extents(const LabelMap& a, std::size_t height, std::size_t width, const char* what);

// HSC1: "HSC1", u32 H, W, B, u32 dtype (0 = f32), then H*W*B little-endian floats.
HyperCube read_cube(const std::filesystem::path& path);
void write_cube(const HyperCube& cube, const std::filesystem::path& path);

// LBL1: "LBL1", u32 H, W, then H*W little-endian u16 labels.
LabelMap read_labels(const std::filesystem::path& path);
void write_labels(const LabelMap& labels, const std::filesystem::path& path);

} // namespace hsi
