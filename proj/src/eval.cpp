#include "hsiseg/eval.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "binio.hpp"

namespace hsi {

namespace {

using namespace detail;

constexpr Rgb kTable[16] = {
    {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},  {245, 130, 48},  {145, 30, 180},
    {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 190}, {0, 128, 128},  {230, 190, 255},
    {170, 110, 40}, {255, 250, 200}, {128, 0, 0},   {170, 255, 195},
};

std::string fixed(double v, int digits = 2) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_pixmap(const Pixmap& pm, const std::filesystem::path& path) {
    std::string bytes = "P6\n" + std::to_string(pm.width) + " " + std::to_string(pm.height) + "\n255\n";
    bytes.reserve(bytes.size() + pm.pixels.size() * 3);
    for (const Rgb& c : pm.pixels) bytes.append(reinterpret_cast<const char*>(c.data()), 3);
    dump(path, bytes);
}

} // namespace

MetricsReport compute_metrics(const LabelMap& pred, const LabelMap& truth) {
    require_same_extents(pred, truth.height, truth.width, "prediction");
    const std::size_t K = truth.max_label();
    std::vector<std::size_t> total(K, 0), hit(K, 0);
    MetricsReport r;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const std::uint16_t t = truth.labels[i];
        if (t == kUnlabeled) continue;
        ++total[t - 1];
        ++r.labeled;
        if (pred.labels[i] == t) {
            ++hit[t - 1];
            ++r.correct;
        }
    }
    if (r.labeled == 0) throw ArgumentError("ground truth has no labeled pixels");
    r.oa = 100.0 * double(r.correct) / double(r.labeled);
    r.per_class_accuracy.assign(K, std::numeric_limits<double>::quiet_NaN());
    std::size_t present = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (total[k] == 0) continue;
        r.per_class_accuracy[k] = 100.0 * double(hit[k]) / double(total[k]);
        sum += r.per_class_accuracy[k];
        ++present;
    }
    r.aa = sum / double(present);
    return r;
}

MetricsReport summarize_runs(const std::vector<MetricsReport>& runs) {
    if (runs.empty()) throw ArgumentError("no runs to summarize");
    const std::size_t n = runs.size();
    MetricsReport out;
    out.run_count = n;
    std::size_t K = 0;
    for (const auto& r : runs) K = std::max(K, r.per_class_accuracy.size());
    out.per_class_accuracy.assign(K, 0.0);
    std::vector<std::size_t> seen(K, 0);
    for (const auto& r : runs) {
        out.oa += r.oa / double(n);
        out.aa += r.aa / double(n);
        out.labeled += r.labeled;
        out.correct += r.correct;
        for (std::size_t k = 0; k < r.per_class_accuracy.size(); ++k) {
            if (std::isnan(r.per_class_accuracy[k])) continue;
            out.per_class_accuracy[k] += r.per_class_accuracy[k];
            ++seen[k];
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        out.per_class_accuracy[k] =
            seen[k] ? out.per_class_accuracy[k] / double(seen[k]) : std::numeric_limits<double>::quiet_NaN();
    }
    if (n > 1) {
        double so = 0.0, sa = 0.0;
        for (const auto& r : runs) {
            so += (r.oa - out.oa) * (r.oa - out.oa);
            sa += (r.aa - out.aa) * (r.aa - out.aa);
        }
        out.oa_std = std::sqrt(so / double(n - 1));
        out.aa_std = std::sqrt(sa / double(n - 1));
    }
    return out;
}

std::string format_report(const MetricsReport& r) {
    std::ostringstream os;
    os << "OA = " << fixed(r.oa) << "\n";
    os << "AA = " << fixed(r.aa) << "\n";
    os << "OA_std = " << fixed(r.oa_std) << "\n";
    os << "AA_std = " << fixed(r.aa_std) << "\n";
    os << "run_count = " << r.run_count << "\n";
    os << "labeled = " << r.labeled << "\n";
    os << "correct = " << r.correct << "\n";
    for (std::size_t k = 0; k < r.per_class_accuracy.size(); ++k) {
        os << "class_" << k + 1 << " = " << fixed(r.per_class_accuracy[k]) << "\n";
    }
    return os.str();
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ArgumentError("paired t-test needs equal sample counts, got " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
    }
    if (a.size() < 2) throw ArgumentError("paired t-test needs at least 2 paired runs");
    const std::size_t n = a.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += (a[i] - b[i]) / double(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
    if (!std::isfinite(mean) || !std::isfinite(ss)) throw NumericError("paired t-test on non-finite samples");
    TTestResult r;
    r.df = n - 1;
    if (ss == 0.0) {
        if (mean == 0.0) return r;
        r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        r.significant = true;
        return r;
    }
    const double se = std::sqrt(ss / double(n - 1) / double(n));
    r.t = mean / se;
    const boost::math::students_t dist(double(r.df));
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    r.significant = r.p < 0.05;
    return r;
}

std::string format_t_test(const TTestResult& r) {
    std::ostringstream os;
    char t[64], p[64];
    std::snprintf(t, sizeof t, "%.6f", r.t);
    std::snprintf(p, sizeof p, "%.6g", r.p);
    os << "t = " << t << "\n";
    os << "df = " << r.df << "\n";
    os << "p = " << p << "\n";
    os << "significant = " << (r.significant ? "true" : "false") << "\n";
    return os.str();
}

std::size_t ErrorMap::count() const {
    std::size_t n = 0;
    for (auto w : wrong) n += w;
    return n;
}

ErrorMap error_map(const LabelMap& pred, const LabelMap& truth) {
    require_same_extents(pred, truth.height, truth.width, "prediction");
    ErrorMap m{truth.height, truth.width, std::vector<std::uint8_t>(truth.size(), 0)};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        m.wrong[i] = truth.labels[i] != kUnlabeled && pred.labels[i] != truth.labels[i];
    }
    return m;
}

Rgb palette_color(std::uint16_t label) {
    if (label == 0) return {0, 0, 0};
    if (label <= 16) return kTable[label - 1];
    return {std::uint8_t(label >> 8), std::uint8_t(label & 0xff), 1};
}

std::uint16_t palette_label(const Rgb& c) {
    if (c == Rgb{0, 0, 0}) return 0;
    for (std::size_t i = 0; i < 16; ++i)
        if (kTable[i] == c) return std::uint16_t(i + 1);
    const std::uint16_t id = std::uint16_t((c[0] << 8) | c[1]);
    if (c[2] == 1 && id > 16) return id;
    throw CorruptionError("colour (" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                          std::to_string(c[2]) + ") is not in the label palette");
}

void render_label_map(const LabelMap& map, const std::filesystem::path& path) {
    Pixmap pm{map.height, map.width, {}};
    pm.pixels.reserve(map.size());
    for (auto l : map.labels) pm.pixels.push_back(palette_color(l));
    write_pixmap(pm, path);
}

void render_error_map(const ErrorMap& map, const std::filesystem::path& path) {
    Pixmap pm{map.height, map.width, {}};
    pm.pixels.reserve(map.wrong.size());
    for (auto w : map.wrong) pm.pixels.push_back(w ? Rgb{255, 255, 255} : Rgb{0, 0, 0});
    write_pixmap(pm, path);
}

Pixmap read_pixmap(const std::filesystem::path& path) {
    const std::string bytes = slurp(path);
    std::istringstream in(bytes);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6") throw BadMagicError("'" + path.string() + "' is not a P6 pixmap");
    if (!in || maxval != 255) throw CorruptionError("'" + path.string() + "' has an unsupported pixmap header");
    in.get();
    const std::size_t offset = std::size_t(in.tellg());
    need(bytes, offset + w * h * 3, path, "pixel data");
    if (bytes.size() != offset + w * h * 3) throw CorruptionError("'" + path.string() + "' has trailing bytes");
    Pixmap pm{h, w, std::vector<Rgb>(w * h)};
    for (std::size_t i = 0; i < w * h; ++i)
        for (std::size_t k = 0; k < 3; ++k) pm.pixels[i][k] = std::uint8_t(bytes[offset + i * 3 + k]);
    return pm;
}

LabelMap read_label_pixmap(const std::filesystem::path& path) {
    const Pixmap pm = read_pixmap(path);
    LabelMap m(pm.height, pm.width);
    for (std::size_t i = 0; i < pm.pixels.size(); ++i) m.labels[i] = palette_label(pm.pixels[i]);
    return m;
}

} // namespace hsi
