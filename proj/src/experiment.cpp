#include "hsiseg/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "binio.hpp"
#include "hsiseg/eval.hpp"

namespace hsi {

namespace {

using boost::property_tree::ptree;

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Reader {
public:
    explicit Reader(const ptree& tree) : tree_(tree) {
        for (const auto& [section, body] : tree) {
            if (body.empty()) throw ConfigError("config key '" + section + "' must sit inside a section");
            for (const auto& [key, value] : body) {
                (void)value;
                unused_.insert(section + "." + key);
            }
        }
    }

    const std::string* raw(const std::string& key) {
        const auto v = tree_.get_optional<std::string>(ptree::path_type(key, '.'));
        if (!v) return nullptr;
        unused_.erase(key);
        store_ = *v;
        return &store_;
    }

    void size(const std::string& key, std::size_t& out) {
        if (const auto* s = raw(key)) {
            std::uint64_t v = 0;
            const auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
            if (ec != std::errc{} || p != s->data() + s->size()) bad(key, *s, "a non-negative integer");
            out = std::size_t(v);
        }
    }

    void u64(const std::string& key, std::uint64_t& out) {
        std::size_t v = std::size_t(out);
        size(key, v);
        out = v;
    }

    void real(const std::string& key, double& out) {
        if (const auto* s = raw(key)) {
            char* end = nullptr;
            const double v = std::strtod(s->c_str(), &end);
            if (s->empty() || end != s->c_str() + s->size() || !std::isfinite(v)) bad(key, *s, "a finite number");
            out = v;
        }
    }

    void flag(const std::string& key, bool& out) {
        if (const auto* s = raw(key)) {
            if (*s == "true") out = true;
            else if (*s == "false") out = false;
            else bad(key, *s, "true or false");
        }
    }

    void text(const std::string& key, std::string& out) {
        if (const auto* s = raw(key)) out = *s;
    }

    void finish() const {
        if (!unused_.empty()) throw ConfigError("unknown config key '" + *unused_.begin() + "'");
    }

private:
    [[noreturn]] static void bad(const std::string& key, const std::string& value, const char* want) {
        throw ConfigError("config key '" + key + "' = '" + value + "' must be " + want);
    }

    const ptree& tree_;
    std::set<std::string> unused_;
    std::string store_;
};

LabelMap mask_from(const LabelMap& truth, const std::vector<PixelCoord>& pixels) {
    LabelMap m(truth.height, truth.width);
    for (const auto& p : pixels) m.at(p.row, p.col) = truth.at(p.row, p.col);
    return m;
}

void log_line(const Logger& log, const std::string& s) {
    if (log) log(s);
}

std::string stats_bytes(const BandStats& s) {
    using namespace detail;
    std::string out = "BSTA";
    put_le<std::uint32_t>(out, std::uint32_t(s.mean.size()));
    for (double v : s.mean) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    for (double v : s.stddev) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

BandStats read_stats(const std::filesystem::path& path) {
    using namespace detail;
    const std::string bytes = slurp(path);
    check_magic(bytes, "BSTA", path);
    need(bytes, 8, path, "band count");
    const std::size_t B = get_le<std::uint32_t>(bytes.data() + 4);
    need(bytes, 8 + 16 * B, path, "band statistics");
    if (bytes.size() != 8 + 16 * B) throw CorruptionError("'" + path.string() + "' has trailing bytes");
    BandStats s;
    for (std::size_t b = 0; b < B; ++b) s.mean.push_back(std::bit_cast<double>(get_le<std::uint64_t>(bytes.data() + 8 + 8 * b)));
    for (std::size_t b = 0; b < B; ++b) {
        s.stddev.push_back(std::bit_cast<double>(get_le<std::uint64_t>(bytes.data() + 8 + 8 * (B + b))));
    }
    return s;
}

NetworkSpec classifier_spec(const RunConfig& cfg) {
    return build_network({cfg.dataset + "-cls", cfg.scene.num_classes, cfg.cnn_kernels, cfg.cnn_kernel_extent,
                          cfg.fc_units});
}

NetworkSpec unary_spec(const RunConfig& cfg) {
    return build_network({cfg.dataset + "-seg", cfg.scene.num_classes, cfg.crf_kernels, cfg.crf_kernel_extent,
                          cfg.fc_units});
}

NetworkSpec pairwise_spec(const RunConfig& cfg) {
    const std::size_t K = cfg.scene.num_classes;
    return build_network({cfg.dataset + "-seg", K * K, cfg.crf_kernels, cfg.crf_kernel_extent, cfg.fc_units});
}

KernelParams resolved_kernel(const RunConfig& cfg, const Tensor& appearance) {
    KernelParams kp = cfg.kernel;
    kp.theta_gamma = cfg.theta_gamma > 0.0 ? cfg.theta_gamma : default_kernel_params(appearance).theta_gamma;
    return kp;
}

double masked_oa(const LabelMap& pred, const LabelMap& truth) {
    std::size_t n = 0, hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth.labels[i] == kUnlabeled) continue;
        ++n;
        hit += pred.labels[i] == truth.labels[i];
    }
    return n ? 100.0 * double(hit) / double(n) : 0.0;
}

} // namespace

void RunConfig::validate() const {
    if (scene.height == 0 || scene.width == 0 || scene.bands == 0) throw ConfigError("data extents must be positive");
    if (scene.num_classes < 2) throw ConfigError("data.classes must be at least 2");
    if (group_size == 0 || group_size > scene.bands) throw ConfigError("data.group_size must be in [1, bands]");
    if (patch % 2 == 0) throw ConfigError("data.patch must be odd");
    if (train_per_class == 0) throw ConfigError("data.train_per_class must be positive");
    if (cnn_kernels == 0 || crf_kernels == 0 || fc_units == 0) throw ConfigError("layer widths must be positive");
    if (cnn_kernel_extent % 2 == 0 || crf_kernel_extent % 2 == 0) throw ConfigError("kernel extents must be odd");
    if (tile == 0) throw ConfigError("crf.tile must be positive");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw ConfigError("crf.label_fraction must be in (0, 1]");
    if (!(mean_field.tolerance >= 0.0)) throw ConfigError("crf.tolerance must be non-negative");
    if (theta_gamma < 0.0) throw ConfigError("crf.theta_gamma must be non-negative");
    if (appearance != "features" && appearance != "intensity") {
        throw ConfigError("crf.appearance must be features or intensity, got '" + appearance + "'");
    }
    KernelParams kp = kernel;
    kp.theta_gamma = 1.0;
    kp.validate();
    augmentation.validate();
    cnn_sgd().validate();
    crf_sgd().validate();
    preset_schedule(dataset);
}

SgdConfig RunConfig::cnn_sgd() const {
    return {cnn_learning_rate, cnn_epochs, batch_size, train_fraction, seed};
}

SgdConfig RunConfig::crf_sgd() const {
    return {crf_learning_rate, crf_epochs, batch_size, train_fraction, seed + 17};
}

RunConfig parse_config(const std::string& text) {
    ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    Reader r(tree);
    RunConfig c;
    r.text("cnn.dataset", c.dataset);
    const PresetSchedule sched = preset_schedule(c.dataset);
    c.cnn_learning_rate = c.crf_learning_rate = sched.learning_rate;
    c.cnn_epochs = sched.classification_epochs;
    c.crf_epochs = sched.segmentation_epochs;

    r.size("data.height", c.scene.height);
    r.size("data.width", c.scene.width);
    r.size("data.bands", c.scene.bands);
    r.size("data.classes", c.scene.num_classes);
    r.size("data.blobs", c.scene.blob_count);
    r.real("data.noise", c.scene.noise_sigma);
    r.size("data.group_size", c.group_size);
    r.size("data.patch", c.patch);
    r.size("data.train_per_class", c.train_per_class);
    r.flag("data.standardize", c.standardize);

    r.size("cnn.kernels", c.cnn_kernels);
    r.size("cnn.kernel_extent", c.cnn_kernel_extent);
    r.size("cnn.fc_units", c.fc_units);
    r.real("cnn.learning_rate", c.cnn_learning_rate);
    r.size("cnn.epochs", c.cnn_epochs);
    r.flag("cnn.augment", c.augment);
    r.flag("cnn.geometric", c.augmentation.geometric);
    r.size("cnn.virtual_per_real", c.augmentation.virtual_per_real);
    r.real("cnn.alpha_low", c.augmentation.alpha_low);
    r.real("cnn.alpha_high", c.augmentation.alpha_high);
    r.real("cnn.beta_sigma", c.augmentation.beta_sigma);

    r.size("crf.kernels", c.crf_kernels);
    r.size("crf.kernel_extent", c.crf_kernel_extent);
    r.real("crf.learning_rate", c.crf_learning_rate);
    r.size("crf.epochs", c.crf_epochs);
    r.size("crf.tile", c.tile);
    r.real("crf.label_fraction", c.label_fraction);
    r.size("crf.iterations", c.mean_field.iterations);
    r.real("crf.tolerance", c.mean_field.tolerance);
    r.real("crf.w1", c.kernel.w1);
    r.real("crf.w2", c.kernel.w2);
    r.real("crf.theta_alpha_rows", c.kernel.theta_alpha[0]);
    r.real("crf.theta_alpha_cols", c.kernel.theta_alpha[1]);
    r.real("crf.theta_gamma", c.theta_gamma);
    r.text("crf.appearance", c.appearance);
    r.flag("crf.grid_search", c.grid_search);

    std::string placement = to_string(c.placement);
    r.text("refiner.placement", placement);
    c.placement = refiner_placement_from_string(placement);

    r.size("sgd.batch_size", c.batch_size);
    r.real("sgd.train_fraction", c.train_fraction);
    r.u64("sgd.seed", c.seed);
    r.finish();
    c.scene.seed = c.seed;
    c.augmentation.seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(detail::slurp(path)); }

std::string format_config(const RunConfig& c) {
    std::ostringstream os;
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "[data]\n"
       << "height = " << c.scene.height << "\nwidth = " << c.scene.width << "\nbands = " << c.scene.bands
       << "\nclasses = " << c.scene.num_classes << "\nblobs = " << c.scene.blob_count
       << "\nnoise = " << g17(c.scene.noise_sigma) << "\ngroup_size = " << c.group_size << "\npatch = " << c.patch
       << "\ntrain_per_class = " << c.train_per_class << "\nstandardize = " << b(c.standardize) << "\n\n";
    os << "[cnn]\n"
       << "dataset = " << c.dataset << "\nkernels = " << c.cnn_kernels << "\nkernel_extent = " << c.cnn_kernel_extent
       << "\nfc_units = " << c.fc_units << "\nlearning_rate = " << g17(c.cnn_learning_rate)
       << "\nepochs = " << c.cnn_epochs << "\naugment = " << b(c.augment)
       << "\ngeometric = " << b(c.augmentation.geometric) << "\nvirtual_per_real = " << c.augmentation.virtual_per_real
       << "\nalpha_low = " << g17(c.augmentation.alpha_low) << "\nalpha_high = " << g17(c.augmentation.alpha_high)
       << "\nbeta_sigma = " << g17(c.augmentation.beta_sigma) << "\n\n";
    os << "[crf]\n"
       << "kernels = " << c.crf_kernels << "\nkernel_extent = " << c.crf_kernel_extent
       << "\nlearning_rate = " << g17(c.crf_learning_rate) << "\nepochs = " << c.crf_epochs << "\ntile = " << c.tile
       << "\nlabel_fraction = " << g17(c.label_fraction) << "\niterations = " << c.mean_field.iterations
       << "\ntolerance = " << g17(c.mean_field.tolerance) << "\nw1 = " << g17(c.kernel.w1)
       << "\nw2 = " << g17(c.kernel.w2) << "\ntheta_alpha_rows = " << g17(c.kernel.theta_alpha[0])
       << "\ntheta_alpha_cols = " << g17(c.kernel.theta_alpha[1]) << "\ntheta_gamma = " << g17(c.theta_gamma)
       << "\nappearance = " << c.appearance << "\ngrid_search = " << b(c.grid_search) << "\n\n";
    os << "[refiner]\nplacement = " << to_string(c.placement) << "\n\n";
    os << "[sgd]\nbatch_size = " << c.batch_size << "\ntrain_fraction = " << g17(c.train_fraction)
       << "\nseed = " << c.seed << "\n";
    return os.str();
}

ClassifierStage train_classifier_stage(const HyperCube& cube, const LabelMap& truth, const RunConfig& cfg,
                                       const Logger& log) {
    cfg.validate();
    cube.validate();
    require_same_extents(truth, cube.height, cube.width, "training labels");
    if (truth.max_label() > cfg.scene.num_classes) {
        throw ArgumentError("labels reach class " + std::to_string(truth.max_label()) + " but data.classes = " +
                            std::to_string(cfg.scene.num_classes));
    }
    ClassifierStage st;
    st.stats = compute_band_stats(cube);
    st.groups = split_band_groups(cube, cfg.group_size);
    st.spec = classifier_spec(cfg);
    const HyperCube prepared = prepare_cube(cube, st, cfg);
    const auto pixels = sample_training_pixels(truth, cfg.train_per_class, cfg.seed);
    const auto patches = extract_patches(prepared, mask_from(truth, pixels), st.groups, {cfg.patch, cfg.patch});
    log_line(log, "cnn: " + std::to_string(pixels.size()) + " training pixels, " + std::to_string(st.groups.count()) +
                      " band groups");
    st.models = train_group_cnns(patches, st.spec, cfg.cnn_sgd(),
                                 cfg.augment ? std::optional<AugmentConfig>(cfg.augmentation) : std::nullopt);
    for (const auto& [g, m] : st.models) {
        log_line(log, "cnn: group " + std::to_string(g) + " final train loss " + g17(m.curve.train_loss.empty()
                                                                                         ? 0.0
                                                                                         : m.curve.train_loss.back()));
    }
    return st;
}

HyperCube prepare_cube(const HyperCube& cube, const ClassifierStage& stage, const RunConfig& cfg) {
    if (!cfg.standardize) return cube;
    if (stage.stats.mean.size() != cube.bands) {
        throw ShapeError("cube has " + std::to_string(cube.bands) + " bands, model expects " +
                         std::to_string(stage.stats.mean.size()));
    }
    return standardize(cube, stage.stats);
}

Tensor appearance_values(const ClassifierOutputs& outputs, const HyperCube& prepared, const BandGroupSet& groups,
                         const std::string& mode) {
    if (mode == "features") return outputs.features.values;
    if (mode != "intensity") throw ConfigError("unknown appearance mode '" + mode + "'");
    std::size_t S = 0;
    for (const auto& g : groups.groups) S = std::max(S, g.size());
    Tensor a(Shape{prepared.height, prepared.width, groups.count(), S});
    for (std::size_t r = 0; r < prepared.height; ++r)
        for (std::size_t c = 0; c < prepared.width; ++c)
            for (std::size_t g = 0; g < groups.count(); ++g)
                for (std::size_t b = groups.groups[g].begin; b < groups.groups[g].end; ++b) {
                    a.at(r, c, g, b - groups.groups[g].begin) = prepared.at(r, c, b);
                }
    return a;
}

BandStats feature_stats(const FeatureMap& fm) {
    const std::size_t C = fm.channels(), n = fm.values.size() / std::max<std::size_t>(C, 1);
    BandStats s;
    s.mean.assign(C, 0.0);
    s.stddev.assign(C, 0.0);
    for (std::size_t i = 0; i < fm.values.size(); ++i) s.mean[i % C] += fm.values[i];
    for (double& m : s.mean) m /= double(n);
    for (std::size_t i = 0; i < fm.values.size(); ++i) {
        const double d = fm.values[i] - s.mean[i % C];
        s.stddev[i % C] += d * d;
    }
    for (double& v : s.stddev) v = std::sqrt(v / double(n));
    return s;
}

FeatureMap standardize_features(const FeatureMap& fm, const BandStats& stats) {
    const std::size_t C = fm.channels();
    if (stats.mean.size() != C || stats.stddev.size() != C) {
        throw ShapeError("feature statistics cover " + std::to_string(stats.mean.size()) + " channels, map has " +
                         std::to_string(C));
    }
    FeatureMap out = fm;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double sd = stats.stddev[i % C] > 0.0 ? stats.stddev[i % C] : 1.0;
        out.values[i] = float((out.values[i] - stats.mean[i % C]) / sd);
    }
    return out;
}

Segmentation crf_segment(const CrfStage& stage, const FeatureMap& fm, const Tensor& appearance,
                         const MeanFieldOptions& options) {
    return segment(standardize_features(fm, stage.feature_stats), stage.nets, stage.kernel, options, &appearance);
}

CrfStage train_crf_stage(const ClassifierOutputs& outputs, const Tensor& appearance, const LabelMap& truth,
                         const RunConfig& cfg, const Logger& log) {
    cfg.validate();
    CrfStage st;
    st.feature_stats = feature_stats(outputs.features);
    const FeatureMap fm = standardize_features(outputs.features, st.feature_stats);
    require_same_extents(truth, fm.height(), fm.width(), "CRF labels");

    // Split the labeled pixels into CRF training labels and kernel validation labels.
    LabelMap train(truth.height, truth.width), val(truth.height, truth.width);
    std::mt19937_64 rng(cfg.seed + 29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth.labels[i] == kUnlabeled) continue;
        (u(rng) < cfg.label_fraction ? train : val).labels[i] = truth.labels[i];
    }

    st.nets = init_potential_nets(unary_spec(cfg), pairwise_spec(cfg), fm.channels(), cfg.placement, cfg.seed + 23);
    const auto tiles = make_training_tiles(fm, train, cfg.tile);
    log_line(log, "crf: " + std::to_string(tiles.size()) + " training tiles, refiner " + to_string(cfg.placement));
    st.curve = piecewise_train(tiles, st.nets, cfg.crf_sgd());
    if (!st.curve.loss.empty()) log_line(log, "crf: final loss " + g17(st.curve.loss.back()));

    st.kernel = resolved_kernel(cfg, appearance);
    std::size_t val_count = 0;
    for (auto l : val.labels) val_count += l != kUnlabeled;
    if (!cfg.grid_search || val_count == 0) return st;

    const CrfGraph graph = build_graph(fm, st.nets.num_labels());
    const UnaryTable phi = unary_potentials(graph, st.nets);
    const PairwiseTable psi = pairwise_potentials(graph, st.nets);
    double best = -1.0;
    for (double scale : {0.0, 0.25, 0.5, 1.0, 2.0})
        for (double theta : {1.0, 3.0}) {
            if (scale == 0.0 && theta != 1.0) continue;
            KernelParams kp = st.kernel;
            kp.w1 = cfg.kernel.w1 * scale;
            kp.w2 = cfg.kernel.w2 * scale;
            kp.theta_alpha = {theta, theta};
            const auto mf = mean_field_infer(graph, phi, psi, gaussian_edge_weights(graph, kp, &appearance),
                                             cfg.mean_field);
            const double oa = masked_oa(collapse_voxels(graph, mf.marginals), val);
            st.grid.emplace_back(kp, oa);
            if (oa > best) {
                best = oa;
                st.kernel = kp;
            }
        }
    log_line(log, "crf: kernel grid picked w1 = " + g17(st.kernel.w1) + ", theta_alpha = " +
                      g17(st.kernel.theta_alpha[0]) + " (validation OA " + g17(best) + ")");
    return st;
}

TrainedModel train_model(const HyperCube& cube, const LabelMap& truth, const RunConfig& cfg, const Logger& log) {
    TrainedModel m;
    m.config = cfg;
    m.classifier = train_classifier_stage(cube, truth, cfg, log);
    const HyperCube prepared = prepare_cube(cube, m.classifier, cfg);
    const ClassifierOutputs out = run_group_cnns(prepared, m.classifier.groups, m.classifier.models, m.classifier.spec);
    const Tensor appearance = appearance_values(out, prepared, m.classifier.groups, cfg.appearance);
    m.crf = train_crf_stage(out, appearance, truth, cfg, log);
    return m;
}

Inference infer(const TrainedModel& model, const HyperCube& cube) {
    const HyperCube prepared = prepare_cube(cube, model.classifier, model.config);
    const ClassifierOutputs out =
        run_group_cnns(prepared, model.classifier.groups, model.classifier.models, model.classifier.spec);
    const Tensor appearance = appearance_values(out, prepared, model.classifier.groups, model.config.appearance);
    Inference inf;
    inf.segmentation = crf_segment(model.crf, out.features, appearance, model.config.mean_field);
    inf.classification = out.classification;
    return inf;
}

std::string loss_csv(const LossCurve& curve) {
    std::string s = "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < curve.train_loss.size(); ++e) {
        const double v = e < curve.val_loss.size() ? curve.val_loss[e] : std::nan("");
        s += std::to_string(e + 1) + "," + g17(curve.train_loss[e]) + "," + (std::isnan(v) ? "nan" : g17(v)) + "\n";
    }
    return s;
}

void save_model(const TrainedModel& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    RunConfig cfg = model.config;
    cfg.kernel = model.crf.kernel;
    cfg.theta_gamma = model.crf.kernel.theta_gamma;
    detail::dump(dir / "config.ini", format_config(cfg));
    detail::dump(dir / "band_stats.bin", stats_bytes(model.classifier.stats));
    for (const auto& [g, m] : model.classifier.models) {
        const std::string stem = "cnn_group_" + std::to_string(g);
        write_checkpoint(model.classifier.spec, m.params, dir / (stem + ".hcnn"));
        detail::dump(dir / (stem + "_loss.csv"), loss_csv(m.curve));
    }
    detail::dump(dir / "crf_feature_stats.bin", stats_bytes(model.crf.feature_stats));
    write_checkpoint(model.crf.nets.unary_spec, model.crf.nets.unary, dir / "crf_unary.hcnn");
    write_checkpoint(model.crf.nets.pairwise_spec, model.crf.nets.pairwise, dir / "crf_pairwise.hcnn");
    if (model.crf.nets.placement != RefinerPlacement::none) write_refiner(model.crf.nets.refiner, dir / "crf_refiner.hrfn");
    detail::dump(dir / "crf_loss.csv", loss_csv(LossCurve{model.crf.curve.loss, {}}));
}

TrainedModel load_model(const std::filesystem::path& dir) {
    TrainedModel m;
    m.config = load_config(dir / "config.ini");
    const RunConfig& cfg = m.config;
    m.classifier.stats = read_stats(dir / "band_stats.bin");
    m.classifier.groups = split_band_groups(m.classifier.stats.mean.size(), cfg.group_size);
    m.classifier.spec = classifier_spec(cfg);
    for (std::size_t g = 0; g < m.classifier.groups.count(); ++g) {
        auto [spec, params] = read_checkpoint(dir / ("cnn_group_" + std::to_string(g) + ".hcnn"));
        if (!(spec == m.classifier.spec)) throw CorruptionError("cnn_group_" + std::to_string(g) + " spec differs from config");
        m.classifier.models[g].params = std::move(params);
    }
    m.crf.feature_stats = read_stats(dir / "crf_feature_stats.bin");
    PotentialNets& nets = m.crf.nets;
    std::tie(nets.unary_spec, nets.unary) = read_checkpoint(dir / "crf_unary.hcnn");
    std::tie(nets.pairwise_spec, nets.pairwise) = read_checkpoint(dir / "crf_pairwise.hcnn");
    nets.mu = potts_compatibility(nets.unary_spec.num_outputs());
    nets.placement = cfg.placement;
    if (cfg.placement != RefinerPlacement::none) {
        nets.refiner_spec =
            build_refiner(cfg.placement == RefinerPlacement::unary ? nets.unary_spec : nets.pairwise_spec);
        nets.refiner = read_refiner(nets.refiner_spec, dir / "crf_refiner.hrfn");
    }
    nets.validate();
    m.crf.kernel = cfg.kernel;
    m.crf.kernel.theta_gamma = cfg.theta_gamma;
    return m;
}

} // namespace hsi
