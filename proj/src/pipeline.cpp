#include "hsiseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hsi {

BandGroupSet split_band_groups(std::size_t bands, std::size_t group_size) {
    if (group_size < 1 || group_size > bands) {
        throw ArgumentError("band group size " + std::to_string(group_size) + " outside [1, " + std::to_string(bands) +
                            "]");
    }
    BandGroupSet set;
    set.group_size = group_size;
    for (std::size_t b = 0; b < bands; b += group_size) set.groups.push_back({b, std::min(bands, b + group_size)});
    return set;
}

std::ptrdiff_t mirror_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (std::ptrdiff_t(n) - 1);
    i = std::abs(i) % period;
    return i >= std::ptrdiff_t(n) ? period - i : i;
}

Tensor extract_patch(const HyperCube& cube, const BandRange& bands, PixelCoord center, PatchExtent extent) {
    if (extent.rows % 2 == 0 || extent.cols % 2 == 0) {
        throw ArgumentError("patch extents must be odd, got " + std::to_string(extent.rows) + "x" +
                            std::to_string(extent.cols));
    }
    const std::ptrdiff_t hr = std::ptrdiff_t(extent.rows / 2), hc = std::ptrdiff_t(extent.cols / 2);
    const std::size_t L = bands.size();
    Tensor t({extent.rows, extent.cols, L, 1});
    for (std::size_t r = 0; r < extent.rows; ++r) {
        const auto sr = std::size_t(mirror_index(std::ptrdiff_t(center.row + r) - hr, cube.height));
        for (std::size_t c = 0; c < extent.cols; ++c) {
            const auto sc = std::size_t(mirror_index(std::ptrdiff_t(center.col + c) - hc, cube.width));
            const float* px = &cube.values[(sr * cube.width + sc) * cube.bands + bands.begin];
            std::copy(px, px + L, &t[(r * extent.cols + c) * L]);
        }
    }
    return t;
}

std::vector<LabeledPatch> extract_patches(const HyperCube& cube, const LabelMap& labels, const BandGroupSet& groups,
                                          PatchExtent extent) {
    require_same_extents(labels, cube.height, cube.width, "extract_patches");
    if (extent.rows % 2 == 0 || extent.cols % 2 == 0) {
        throw ArgumentError("patch extents must be odd, got " + std::to_string(extent.rows) + "x" +
                            std::to_string(extent.cols));
    }
    std::vector<LabeledPatch> out;
    for (std::size_t r = 0; r < cube.height; ++r)
        for (std::size_t c = 0; c < cube.width; ++c) {
            const auto label = labels.at(r, c);
            if (label == kUnlabeled) continue;
            for (std::size_t g = 0; g < groups.count(); ++g) {
                out.push_back({extract_patch(cube, groups.groups[g], {r, c}, extent), {r, c}, g, label});
            }
        }
    return out;
}

BandStats compute_band_stats(const HyperCube& cube) {
    cube.validate();
    BandStats s;
    s.mean.assign(cube.bands, 0.0);
    s.stddev.assign(cube.bands, 0.0);
    const double n = double(cube.pixel_count());
    for (std::size_t p = 0; p < cube.pixel_count(); ++p)
        for (std::size_t b = 0; b < cube.bands; ++b) s.mean[b] += cube.values[p * cube.bands + b];
    for (double& m : s.mean) m /= n;
    for (std::size_t p = 0; p < cube.pixel_count(); ++p)
        for (std::size_t b = 0; b < cube.bands; ++b) {
            const double d = cube.values[p * cube.bands + b] - s.mean[b];
            s.stddev[b] += d * d;
        }
    for (double& v : s.stddev) v = std::sqrt(v / n);
    return s;
}

HyperCube standardize(const HyperCube& cube, const BandStats& stats) {
    if (stats.mean.size() != cube.bands || stats.stddev.size() != cube.bands) {
        throw ShapeError("band statistics cover " + std::to_string(stats.mean.size()) + " bands, cube has " +
                         std::to_string(cube.bands));
    }
    HyperCube out = cube;
    for (std::size_t p = 0; p < cube.pixel_count(); ++p)
        for (std::size_t b = 0; b < cube.bands; ++b) {
            const double sd = stats.stddev[b] > 1e-12 ? stats.stddev[b] : 1.0;
            float& v = out.values[p * cube.bands + b];
            v = float((double(v) - stats.mean[b]) / sd);
        }
    return out;
}

void AugmentConfig::validate() const {
    if (!(0.0 <= alpha_low && alpha_low <= alpha_high && alpha_high <= 1.0)) {
        throw ArgumentError("augment alpha range must satisfy 0 <= low <= high <= 1");
    }
    if (!(beta_sigma >= 0.0)) throw ArgumentError("augment beta_sigma must be non-negative");
}

LabeledPatch fuse_virtual_sample(const LabeledPatch& x_i, const LabeledPatch& x_j, const AugmentConfig& cfg,
                                 std::mt19937_64& rng, std::span<const double> band_range) {
    cfg.validate();
    if (x_i.label != x_j.label) {
        throw ArgumentError("virtual sample parents carry different labels " + std::to_string(x_i.label) + " and " +
                            std::to_string(x_j.label));
    }
    if (x_i.group_index != x_j.group_index) throw ArgumentError("virtual sample parents come from different band groups");
    require_same_shape(x_i.data.shape(), x_j.data.shape(), "fuse_virtual_sample");

    const std::size_t L = x_i.data.extent(2);
    std::vector<double> range(band_range.begin(), band_range.end());
    if (range.empty()) {
        range.assign(L, 0.0);
        std::vector<double> lo(L, INFINITY), hi(L, -INFINITY);
        for (const Tensor* t : {&x_i.data, &x_j.data})
            for (std::size_t n = 0; n < t->size(); ++n) {
                const std::size_t b = n % L;
                lo[b] = std::min(lo[b], double((*t)[n]));
                hi[b] = std::max(hi[b], double((*t)[n]));
            }
        for (std::size_t b = 0; b < L; ++b) range[b] = hi[b] - lo[b];
    } else if (range.size() != L) {
        throw ShapeError("band range has " + std::to_string(range.size()) + " entries for " + std::to_string(L) + " bands");
    }

    const double alpha =
        cfg.alpha_low == cfg.alpha_high ? cfg.alpha_low : std::uniform_real_distribution<double>(cfg.alpha_low, cfg.alpha_high)(rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    LabeledPatch y = x_i;
    for (std::size_t n = 0; n < y.data.size(); ++n) {
        double v = alpha * double(x_i.data[n]) + (1.0 - alpha) * double(x_j.data[n]);
        const double sigma = cfg.beta_sigma * range[n % L];
        if (sigma > 0.0) v += sigma * noise(rng);
        y.data[n] = float(v);
    }
    return y;
}

Tensor rotate90(const Tensor& patch) {
    const std::size_t M = patch.extent(0), N = patch.extent(1), Z = patch.extent(2), C = patch.extent(3);
    if (M != N) throw ShapeError("rotation needs a square patch, got " + shape_to_string(patch.shape()));
    Tensor out(patch.shape());
    for (std::size_t r = 0; r < M; ++r)
        for (std::size_t c = 0; c < N; ++c)
            for (std::size_t z = 0; z < Z; ++z)
                for (std::size_t m = 0; m < C; ++m) out.at(r, c, z, m) = patch.at(c, N - 1 - r, z, m);
    return out;
}

Tensor flip_horizontal(const Tensor& patch) {
    const std::size_t M = patch.extent(0), N = patch.extent(1), Z = patch.extent(2), C = patch.extent(3);
    Tensor out(patch.shape());
    for (std::size_t r = 0; r < M; ++r)
        for (std::size_t c = 0; c < N; ++c)
            for (std::size_t z = 0; z < Z; ++z)
                for (std::size_t m = 0; m < C; ++m) out.at(r, c, z, m) = patch.at(r, N - 1 - c, z, m);
    return out;
}

std::vector<LabeledPatch> geometric_augment(const LabeledPatch& patch) {
    if (patch.data.rank() != 4 || patch.data.extent(0) != patch.data.extent(1)) {
        throw ShapeError("geometric augmentation needs a square patch, got " + shape_to_string(patch.data.shape()));
    }
    std::vector<LabeledPatch> out;
    out.reserve(7);
    auto emit = [&](Tensor t) {
        LabeledPatch p = patch;
        p.data = std::move(t);
        out.push_back(std::move(p));
    };
    Tensor r = patch.data;
    for (int k = 1; k <= 3; ++k) {
        r = rotate90(r);
        emit(r);
    }
    Tensor f = flip_horizontal(patch.data);
    emit(f);
    for (int k = 1; k <= 3; ++k) {
        f = rotate90(f);
        emit(f);
    }
    return out;
}

std::vector<LabeledPatch> augment_training_set(const std::vector<LabeledPatch>& real, const AugmentConfig& cfg,
                                               std::span<const double> band_range) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::vector<LabeledPatch> out = real;

    std::map<std::pair<std::size_t, std::uint16_t>, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < real.size(); ++i) by_class[{real[i].group_index, real[i].label}].push_back(i);
    for (const auto& [key, members] : by_class) {
        const std::size_t n_virtual = members.size() * cfg.virtual_per_real;
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        for (std::size_t v = 0; v < n_virtual; ++v) {
            const auto& a = real[members[pick(rng)]];
            const auto& b = real[members[pick(rng)]];
            out.push_back(fuse_virtual_sample(a, b, cfg, rng, band_range));
        }
    }

    if (cfg.geometric) {
        const std::size_t base = out.size();
        out.reserve(base * 8);
        for (std::size_t i = 0; i < base; ++i) {
            for (auto& v : geometric_augment(out[i])) out.push_back(std::move(v));
        }
    }
    return out;
}

TrainValSplit split_train_val(std::span<const std::uint16_t> labels, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ArgumentError("train fraction must lie in (0, 1)");
    std::map<std::uint16_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    TrainValSplit split;
    std::mt19937_64 rng(seed);
    for (auto& [label, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        if (idx.size() < 2) {
            split.warnings.push_back("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                     " sample(s); all assigned to training");
            split.train.insert(split.train.end(), idx.begin(), idx.end());
            continue;
        }
        auto n_train = std::size_t(std::llround(fraction * double(idx.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        split.train.insert(split.train.end(), idx.begin(), idx.begin() + std::ptrdiff_t(n_train));
        split.val.insert(split.val.end(), idx.begin() + std::ptrdiff_t(n_train), idx.end());
    }
    return split;
}

std::vector<PixelCoord> sample_training_pixels(const LabelMap& labels, std::size_t per_class, std::uint64_t seed) {
    std::map<std::uint16_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels.labels[i] != kUnlabeled) by_class[labels.labels[i]].push_back(i);
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    for (auto& [label, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n = std::min(per_class, idx.size());
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + std::ptrdiff_t(n));
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<PixelCoord> out;
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back({i / labels.width, i % labels.width});
    return out;
}

} // namespace hsi
