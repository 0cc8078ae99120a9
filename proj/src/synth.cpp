#include "hsiseg/synth.hpp"

#include <cmath>
#include <random>
#include <string>

namespace hsi {

namespace {

std::vector<float> random_signature(std::size_t bands, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> base(0.1, 0.3);
    std::uniform_real_distribution<double> amp(0.1, 0.5);
    std::uniform_real_distribution<double> centre(0.0, double(bands));
    std::uniform_real_distribution<double> width(double(bands) / 12.0, double(bands) / 5.0);
    const double b0 = base(rng);
    std::vector<float> sig(bands, float(b0));
    for (int bump = 0; bump < 3; ++bump) {
        const double a = amp(rng), c = centre(rng), w = width(rng);
        for (std::size_t b = 0; b < bands; ++b) {
            const double d = (double(b) - c) / w;
            sig[b] += float(a * std::exp(-0.5 * d * d));
        }
    }
    return sig;
}

double l2(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    return std::sqrt(s);
}

} // namespace

SyntheticScene synth_scene(const SceneSpec& spec) {
    if (spec.height == 0 || spec.width == 0 || spec.bands == 0) throw ArgumentError("scene extents must be positive");
    if (spec.num_classes < 2) throw ArgumentError("scene needs at least 2 classes");
    if (spec.num_classes > 65535) throw ArgumentError("scene class count exceeds the label range");
    if (spec.blob_count < spec.num_classes) {
        throw ArgumentError("infeasible scene: blob_count " + std::to_string(spec.blob_count) + " < num_classes " +
                            std::to_string(spec.num_classes));
    }
    if (spec.noise_sigma < 0.0) throw ArgumentError("noise_sigma must be non-negative");
    const std::size_t pixels = spec.height * spec.width;
    if (pixels < 100 * spec.num_classes) {
        throw ArgumentError("infeasible scene: too few pixels for every class to cover 1%");
    }

    std::mt19937_64 rng(spec.seed);
    SyntheticScene scene;

    const double min_sep = 0.1 * std::sqrt(double(spec.bands));
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        std::vector<float> sig;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            sig = random_signature(spec.bands, rng);
            bool ok = true;
            for (const auto& other : scene.signatures) ok = ok && l2(sig, other) >= min_sep;
            if (ok) break;
        }
        scene.signatures.push_back(std::move(sig));
    }

    // Voronoi layout; the first num_classes blobs carry one class each so every class appears.
    std::uniform_real_distribution<double> ry(0.0, double(spec.height));
    std::uniform_real_distribution<double> rx(0.0, double(spec.width));
    std::uniform_int_distribution<std::size_t> rclass(1, spec.num_classes);
    const std::size_t min_pixels = (pixels + 99) / 100;
    LabelMap truth;
    bool feasible = false;
    for (int attempt = 0; attempt < 100 && !feasible; ++attempt) {
        std::vector<std::pair<double, double>> centres(spec.blob_count);
        std::vector<std::uint16_t> blob_class(spec.blob_count);
        for (std::size_t i = 0; i < spec.blob_count; ++i) {
            centres[i] = {ry(rng), rx(rng)};
            blob_class[i] = std::uint16_t(i < spec.num_classes ? i + 1 : rclass(rng));
        }
        truth = LabelMap(spec.height, spec.width);
        std::vector<std::size_t> counts(spec.num_classes + 1, 0);
        for (std::size_t r = 0; r < spec.height; ++r)
            for (std::size_t c = 0; c < spec.width; ++c) {
                std::size_t best = 0;
                double best_d = INFINITY;
                for (std::size_t i = 0; i < spec.blob_count; ++i) {
                    const double dy = double(r) + 0.5 - centres[i].first, dx = double(c) + 0.5 - centres[i].second;
                    const double d = dy * dy + dx * dx;
                    if (d < best_d) {
                        best_d = d;
                        best = i;
                    }
                }
                truth.at(r, c) = blob_class[best];
                ++counts[blob_class[best]];
            }
        feasible = true;
        for (std::size_t k = 1; k <= spec.num_classes; ++k) feasible = feasible && counts[k] >= min_pixels;
    }
    if (!feasible) throw ArgumentError("could not place every class on at least 1% of the pixels");

    scene.cube = HyperCube(spec.height, spec.width, spec.bands);
    scene.cube.band_wavelengths.resize(spec.bands);
    for (std::size_t b = 0; b < spec.bands; ++b) {
        scene.cube.band_wavelengths[b] =
            spec.bands == 1 ? 400e-9 : 400e-9 + (2500e-9 - 400e-9) * double(b) / double(spec.bands - 1);
    }
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t r = 0; r < spec.height; ++r)
        for (std::size_t c = 0; c < spec.width; ++c) {
            const auto& sig = scene.signatures[truth.at(r, c) - 1];
            for (std::size_t b = 0; b < spec.bands; ++b) {
                double v = sig[b];
                if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
                scene.cube.at(r, c, b) = float(v);
            }
        }
    scene.truth = std::move(truth);
    return scene;
}

} // namespace hsi
