// Command-line front end: synth, train, infer, eval.
#include <CLI11.hpp>
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "hsiseg/eval.hpp"
#include "hsiseg/experiment.hpp"

namespace fs = std::filesystem;
using namespace hsi;

namespace {

struct Globals {
    std::uint64_t seed = 42;
    bool seed_given = false;
    int threads = 0;
    bool quiet = false;
};

Logger make_logger(const Globals& g) {
    if (g.quiet) return {};
    return [](const std::string& s) { std::cerr << s << "\n"; };
}

RunConfig config_for(const std::string& path, const Globals& g) {
    RunConfig cfg = path.empty() ? parse_config("") : load_config(path);
    if (g.seed_given || path.empty()) {
        cfg.seed = g.seed;
        cfg.scene.seed = g.seed;
        cfg.augmentation.seed = g.seed;
    }
    return cfg;
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// A label file, or a manifest listing one label file per line relative to the manifest.
std::vector<LabelMap> read_runs(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::string(magic, 4) == "LBL1") return {read_labels(path)};
    in.clear();
    in.seekg(0);
    std::vector<LabelMap> runs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const fs::path p = fs::path(line).is_absolute() ? fs::path(line) : path.parent_path() / line;
        runs.push_back(read_labels(p));
    }
    if (runs.empty()) throw ArgumentError("'" + path.string() + "' lists no prediction runs");
    return runs;
}

int cmd_synth(const Globals& g, const std::string& out, const std::string& config) {
    const RunConfig cfg = config_for(config, g);
    const SyntheticScene scene = synth_scene(cfg.scene);
    make_dir(out);
    write_cube(scene.cube, fs::path(out) / "cube.hsc");
    write_labels(scene.truth, fs::path(out) / "truth.lbl");
    render_label_map(scene.truth, fs::path(out) / "truth.ppm");
    if (auto log = make_logger(g)) {
        log("synth: " + std::to_string(cfg.scene.height) + "x" + std::to_string(cfg.scene.width) + "x" +
            std::to_string(cfg.scene.bands) + " cube, " + std::to_string(cfg.scene.num_classes) + " classes");
    }
    return 0;
}

int cmd_train(const Globals& g, const std::string& cube_path, const std::string& labels_path, const std::string& config,
              const std::string& out, std::size_t repeat) {
    RunConfig cfg = config_for(config, g);
    const HyperCube cube = read_cube(cube_path);
    const LabelMap truth = read_labels(labels_path);
    cfg.scene.height = cube.height;
    cfg.scene.width = cube.width;
    cfg.scene.bands = cube.bands;
    cfg.scene.num_classes = std::max<std::size_t>(2, truth.max_label());
    cfg.validate();
    const Logger log = make_logger(g);
    for (std::size_t run = 0; run < repeat; ++run) {
        RunConfig rc = cfg;
        rc.seed = cfg.seed + run;
        rc.augmentation.seed = rc.seed;
        const fs::path dir = repeat == 1 ? fs::path(out) : fs::path(out) / ("run_" + std::to_string(run + 1));
        if (log && repeat > 1) log("train: run " + std::to_string(run + 1) + " seed " + std::to_string(rc.seed));
        save_model(train_model(cube, truth, rc, log), dir);
    }
    return 0;
}

void write_inference(const Inference& inf, const fs::path& dir) {
    make_dir(dir);
    write_labels(inf.classification.labels, dir / "classification.lbl");
    write_labels(inf.segmentation.labels, dir / "segmentation.lbl");
    render_label_map(inf.classification.labels, dir / "classification.ppm");
    render_label_map(inf.segmentation.labels, dir / "segmentation.ppm");
}

int cmd_infer(const Globals& g, const std::string& cube_path, const std::string& model, const std::string& out) {
    const HyperCube cube = read_cube(cube_path);
    const Logger log = make_logger(g);
    if (fs::exists(fs::path(model) / "config.ini")) {
        write_inference(infer(load_model(model), cube), out);
        if (log) log("infer: wrote " + out);
        return 0;
    }
    std::vector<fs::path> runs;
    for (std::size_t i = 1; fs::exists(fs::path(model) / ("run_" + std::to_string(i)) / "config.ini"); ++i) {
        runs.push_back(fs::path(model) / ("run_" + std::to_string(i)));
    }
    if (runs.empty()) throw IoError("'" + model + "' holds no trained model");
    std::string cls, seg;
    for (const auto& r : runs) {
        const std::string name = r.filename().string();
        write_inference(infer(load_model(r), cube), fs::path(out) / name);
        cls += name + "/classification.lbl\n";
        seg += name + "/segmentation.lbl\n";
        if (log) log("infer: wrote " + (fs::path(out) / name).string());
    }
    write_text(fs::path(out) / "classification.manifest", cls);
    write_text(fs::path(out) / "segmentation.manifest", seg);
    return 0;
}

std::string prefixed(const std::string& report, const std::string& prefix) {
    std::istringstream in(report);
    std::string line, out;
    while (std::getline(in, line)) out += prefix + line + "\n";
    return out;
}

int cmd_eval(const std::string& pred, const std::string& truth_path, const std::string& pred_b,
             const std::string& error_path) {
    const LabelMap truth = read_labels(truth_path);
    auto score = [&](const std::vector<LabelMap>& runs, std::vector<double>& oa) {
        std::vector<MetricsReport> reports;
        for (const auto& r : runs) {
            reports.push_back(compute_metrics(r, truth));
            oa.push_back(reports.back().oa);
        }
        return summarize_runs(reports);
    };
    const std::vector<LabelMap> runs_a = read_runs(pred);
    std::vector<double> oa_a, oa_b;
    std::string text = format_report(score(runs_a, oa_a));
    if (!pred_b.empty()) {
        text += prefixed(format_report(score(read_runs(pred_b), oa_b)), "b_");
        text += format_t_test(paired_t_test(oa_a, oa_b));
    }
    if (!error_path.empty()) render_error_map(error_map(runs_a.front(), truth), error_path);
    std::cout << text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspectral classification and deep-CRF segmentation"};
    app.require_subcommand(1);
    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (default: all)")->check(CLI::NonNegativeNumber);
    app.add_flag("--quiet", g.quiet, "Suppress progress output");

    std::string out, config, cube, labels, model, pred, truth, pred_b, error_out;
    std::size_t repeat = 1;

    auto* synth = app.add_subcommand("synth", "Write a synthetic cube and its ground truth");
    synth->add_option("--out", out, "Output directory")->required();
    synth->add_option("--config", config, "Run config");

    auto* train = app.add_subcommand("train", "Train the band-group CNNs and the deep CRF");
    train->add_option("--cube", cube, "HSC cube")->required();
    train->add_option("--labels", labels, "LBL training labels")->required();
    train->add_option("--config", config, "Run config");
    train->add_option("--out", out, "Model directory")->required();
    train->add_option("--repeat", repeat, "Independent runs with seeds seed, seed + 1, ...")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    auto* inf = app.add_subcommand("infer", "Classify and segment a cube");
    inf->add_option("--cube", cube, "HSC cube")->required();
    inf->add_option("--model", model, "Model directory")->required();
    inf->add_option("--out", out, "Output directory")->required();

    auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
    ev->add_option("--pred", pred, "LBL prediction or run manifest")->required();
    ev->add_option("--truth", truth, "LBL ground truth")->required();
    ev->add_option("--pred-b", pred_b, "Second prediction manifest for a paired t-test");
    ev->add_option("--error-map", error_out, "Write the error map of the first prediction as P6");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n" << app.help();
        return 2;
    }
    g.seed_given = seed_opt->count() > 0;
    if (g.threads > 0) omp_set_num_threads(g.threads);

    try {
        if (*synth) return cmd_synth(g, out, config);
        if (*train) return cmd_train(g, cube, labels, config, out, repeat);
        if (*inf) return cmd_infer(g, cube, model, out);
        if (*ev) return cmd_eval(pred, truth, pred_b, error_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
