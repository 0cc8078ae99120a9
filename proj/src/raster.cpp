#include "hsiseg/raster.hpp"

#include "binio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

namespace hsi {

namespace {

using namespace detail;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

// Largest payload we agree to allocate: 2^32 values.
constexpr std::uint64_t kMaxValues = std::uint64_t{1} << 32;

std::uint64_t checked_volume(std::initializer_list<std::uint32_t> extents, const std::filesystem::path& path) {
    std::uint64_t v = 1;
    for (std::uint32_t e : extents) {
        if (e == 0) throw ExtentOverflowError("'" + path.string() + "' declares a zero extent");
        v *= e;
        if (v > kMaxValues) throw ExtentOverflowError("'" + path.string() + "' declares more than 2^32 values");
    }
    return v;
}

} // namespace

void HyperCube::validate() const {
    if (height == 0 || width == 0 || bands == 0) throw ShapeError("cube extents must be positive");
    if (values.size() != height * width * bands) {
        throw ShapeError("cube holds " + std::to_string(values.size()) + " values for " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(bands));
    }
    if (!band_wavelengths.empty() && band_wavelengths.size() != bands) {
        throw ShapeError("cube has " + std::to_string(band_wavelengths.size()) + " wavelengths for " +
                         std::to_string(bands) + " bands");
    }
}

std::uint16_t LabelMap::max_label() const {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

void require_same_extents(const LabelMap& a, std::size_t height, std::size_t width, const char* what) {
    if (a.height != height || a.width != width) {
        throw ShapeError(std::string(what) + ": label map " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " does not match " + std::to_string(height) + "x" + std::to_string(width));
    }
}

HyperCube read_cube(const std::filesystem::path& path) {
    const std::string bytes = slurp(path);
    check_magic(bytes, "HSC1", path);
    need(bytes, 20, path, "header");
    const auto h = get_le<std::uint32_t>(bytes.data() + 4);
    const auto w = get_le<std::uint32_t>(bytes.data() + 8);
    const auto b = get_le<std::uint32_t>(bytes.data() + 12);
    const auto dtype = get_le<std::uint32_t>(bytes.data() + 16);
    if (dtype != 0) throw CorruptionError("'" + path.string() + "' uses unsupported dtype code " + std::to_string(dtype));
    const std::uint64_t n = checked_volume({h, w, b}, path);
    need(bytes, 20 + n * 4, path, "payload");

    HyperCube cube(h, w, b);
    const char* p = bytes.data() + 20;
    for (std::uint64_t i = 0; i < n; ++i) {
        cube.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
    }
    return cube;
}

void write_cube(const HyperCube& cube, const std::filesystem::path& path) {
    cube.validate();
    std::string out = "HSC1";
    out.reserve(20 + cube.values.size() * 4);
    put_le<std::uint32_t>(out, std::uint32_t(cube.height));
    put_le<std::uint32_t>(out, std::uint32_t(cube.width));
    put_le<std::uint32_t>(out, std::uint32_t(cube.bands));
    put_le<std::uint32_t>(out, 0);
    for (float v : cube.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    dump(path, out);
}

LabelMap read_labels(const std::filesystem::path& path) {
    const std::string bytes = slurp(path);
    check_magic(bytes, "LBL1", path);
    need(bytes, 12, path, "header");
    const auto h = get_le<std::uint32_t>(bytes.data() + 4);
    const auto w = get_le<std::uint32_t>(bytes.data() + 8);
    const std::uint64_t n = checked_volume({h, w}, path);
    need(bytes, 12 + n * 2, path, "payload");
    LabelMap map(h, w);
    for (std::uint64_t i = 0; i < n; ++i) map.labels[i] = get_le<std::uint16_t>(bytes.data() + 12 + 2 * i);
    return map;
}

void write_labels(const LabelMap& labels, const std::filesystem::path& path) {
    if (labels.labels.size() != labels.height * labels.width) throw ShapeError("label map size mismatch");
    std::string out = "LBL1";
    put_le<std::uint32_t>(out, std::uint32_t(labels.height));
    put_le<std::uint32_t>(out, std::uint32_t(labels.width));
    for (std::uint16_t v : labels.labels) put_le<std::uint16_t>(out, v);
    dump(path, out);
}

} // namespace hsi
