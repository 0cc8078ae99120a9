#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsiseg/raster.hpp"

namespace hsi {

struct MetricsReport {
    double oa = 0.0; // percent
    double aa = 0.0; // percent
    /// Recall of class k + 1 in percent; NaN when the class has no truth pixels.
    std::vector<double> per_class_accuracy;
    double oa_std = 0.0;
    double aa_std = 0.0;
    std::size_t run_count = 1;
    std::size_t labeled = 0;
    std::size_t correct = 0;
};

/// Scores `pred` against every labeled pixel of `truth`.
MetricsReport compute_metrics(const LabelMap& pred, const LabelMap& truth);

/// Means over runs with sample standard deviations (n - 1); a single run has zero spread.
MetricsReport summarize_runs(const std::vector<MetricsReport>& runs);

/// `key = value` lines: OA, AA, OA_std, AA_std, run_count, labeled, correct, class_<k>.
std::string format_report(const MetricsReport& report);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    std::size_t df = 0;
    bool significant = false; // p < 0.05
};

/// Two-sided paired t-test of a - b. Zero spread with zero mean gives t = 0, p = 1;
/// zero spread with a nonzero mean gives t = +-inf, p = 0.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

std::string format_t_test(const TTestResult& r);

/// 1 at labeled pixels whose prediction differs from the truth, 0 elsewhere.
struct ErrorMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> wrong;

    std::size_t count() const;
};

ErrorMap error_map(const LabelMap& pred, const LabelMap& truth);

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed palette: 0 is black, 1..16 come from a hand-picked table, larger ids are
/// encoded as (id >> 8, id & 0xff, 1).
Rgb palette_color(std::uint16_t label);
/// Inverse of palette_color; throws CorruptionError on a colour outside the palette.
std::uint16_t palette_label(const Rgb& color);

/// Binary "P6" pixmap with maxval 255.
void render_label_map(const LabelMap& map, const std::filesystem::path& path);
/// White where wrong, black elsewhere.
void render_error_map(const ErrorMap& map, const std::filesystem::path& path);

struct Pixmap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<Rgb> pixels;
};

Pixmap read_pixmap(const std::filesystem::path& path);
/// Reads a pixmap written by render_label_map back into labels.
LabelMap read_label_pixmap(const std::filesystem::path& path);

} // namespace hsi
