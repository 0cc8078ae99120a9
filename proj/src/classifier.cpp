#include "hsiseg/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace hsi {

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must lie in (0, 1]");
}

PresetSchedule preset_schedule(const std::string& dataset) {
    if (dataset == "indian-pines") return {0.003, 700, 500};
    if (dataset == "pavia") return {0.01, 600, 500};
    if (dataset == "griffith" || dataset == "synthetic") return {0.005, 600, 500};
    throw ConfigError("unknown dataset preset '" + dataset + "'");
}

namespace {

// Adds `grads` into the flat accumulator in declaration order.
void accumulate(std::vector<double>& acc, const NetworkParams& grads) {
    std::size_t i = 0;
    grads.for_each_array(std::function<void(std::span<const float>)>([&](std::span<const float> s) {
        for (float v : s) acc[i++] += double(v);
    }));
}

void scatter(const std::vector<double>& flat, double scale, NetworkParams& out) {
    std::size_t i = 0;
    out.for_each_array(std::function<void(std::span<float>)>([&](std::span<float> s) {
        for (float& v : s) v = float(flat[i++] * scale);
    }));
}

double sample_loss(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x, std::uint16_t label,
                   NetworkParams* grads) {
    const ForwardTrace<float> tr = forward(spec, params, x);
    const Tensor& logits = tr.logits();
    Tensor g(logits.shape());
    const double loss = softmax_cross_entropy<float>(logits.data(), std::size_t(label) - 1, g.data());
    if (grads) *grads = backward(spec, params, tr, g).params;
    return loss;
}

void check_labels(const std::vector<std::uint16_t>& y, std::size_t classes) {
    for (auto l : y) {
        if (l == kUnlabeled || l > classes) {
            throw ArgumentError("training label " + std::to_string(l) + " outside 1.." + std::to_string(classes));
        }
    }
}

} // namespace

GroupModel train_network(const NetworkSpec& spec, NetworkParams init, const std::vector<const Tensor*>& train_x,
                         const std::vector<std::uint16_t>& train_y, const std::vector<const Tensor*>& val_x,
                         const std::vector<std::uint16_t>& val_y, const SgdConfig& sgd) {
    sgd.validate();
    if (train_x.size() != train_y.size() || val_x.size() != val_y.size()) {
        throw ArgumentError("train_network: sample and label counts differ");
    }
    if (train_x.empty() && sgd.epochs > 0) throw ArgumentError("train_network: empty training set");
    check_labels(train_y, spec.num_outputs());
    check_labels(val_y, spec.num_outputs());

    GroupModel model;
    model.params = std::move(init);
    const std::size_t n_params = model.params.parameter_count();
    std::mt19937_64 rng(sgd.seed);
    std::vector<std::size_t> order(train_x.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += sgd.batch_size) {
            const std::size_t stop = std::min(order.size(), start + sgd.batch_size);
            const std::size_t n = stop - start;
            std::vector<NetworkParams> grads(n);
            std::vector<double> losses(n);
            const NetworkParams& params = model.params;
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t s = 0; s < std::ptrdiff_t(n); ++s) {
                const std::size_t idx = order[start + std::size_t(s)];
                losses[s] = sample_loss(spec, params, *train_x[idx], train_y[idx], &grads[s]);
            }
            std::vector<double> acc(n_params, 0.0);
            double batch_loss = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                accumulate(acc, grads[s]);
                batch_loss += losses[s];
            }
            const bool finite_grads = std::all_of(acc.begin(), acc.end(), [](double v) { return std::isfinite(v); });
            if (!std::isfinite(batch_loss) || !finite_grads) {
                throw NumericError("training diverged: non-finite " + std::string(finite_grads ? "loss" : "gradient") +
                                   " at epoch " + std::to_string(epoch + 1) + ", batch starting at sample " +
                                   std::to_string(start));
            }
            epoch_loss += batch_loss;
            NetworkParams step = model.params;
            scatter(acc, 1.0 / double(n), step);
            sgd_step(model.params, step, sgd.learning_rate);
        }
        model.curve.train_loss.push_back(epoch_loss / double(order.size()));

        double val_loss = 0.0;
        std::vector<double> vl(val_x.size());
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t s = 0; s < std::ptrdiff_t(val_x.size()); ++s) {
            vl[s] = sample_loss(spec, model.params, *val_x[s], val_y[s], nullptr);
        }
        for (double v : vl) val_loss += v;
        model.curve.val_loss.push_back(val_x.empty() ? std::nan("") : val_loss / double(val_x.size()));
    }
    return model;
}

GroupModels train_group_cnns(const std::vector<LabeledPatch>& patches, const NetworkSpec& spec, const SgdConfig& sgd,
                             const std::optional<AugmentConfig>& augment) {
    spec.validate();
    sgd.validate();
    if (patches.empty()) throw ArgumentError("train_group_cnns: no patches");
    std::map<std::size_t, std::vector<const LabeledPatch*>> by_group;
    std::set<std::uint16_t> classes;
    for (const auto& p : patches) {
        by_group[p.group_index].push_back(&p);
        classes.insert(p.label);
    }
    for (const auto& [g, members] : by_group) {
        std::set<std::uint16_t> present;
        for (const auto* p : members) present.insert(p->label);
        if (present != classes) {
            throw ArgumentError("train_group_cnns: band group " + std::to_string(g) +
                                " lacks patches for some classes");
        }
    }

    GroupModels models;
    for (const auto& [g, members] : by_group) {
        const std::uint64_t group_seed = sgd.seed + 1000003ULL * (g + 1);
        std::vector<std::uint16_t> labels;
        for (const auto* p : members) labels.push_back(p->label);
        TrainValSplit split;
        if (sgd.train_fraction < 1.0) {
            split = split_train_val(labels, sgd.train_fraction, group_seed);
        } else {
            split.train.resize(labels.size());
            std::iota(split.train.begin(), split.train.end(), 0);
        }

        std::vector<LabeledPatch> train_set;
        for (std::size_t i : split.train) train_set.push_back(*members[i]);
        if (augment) {
            AugmentConfig cfg = *augment;
            cfg.seed = augment->seed + 1000003ULL * (g + 1);
            train_set = augment_training_set(train_set, cfg);
        }
        std::vector<const Tensor*> tx, vx;
        std::vector<std::uint16_t> ty, vy;
        for (const auto& p : train_set) {
            tx.push_back(&p.data);
            ty.push_back(p.label);
        }
        for (std::size_t i : split.val) {
            vx.push_back(&members[i]->data);
            vy.push_back(members[i]->label);
        }
        SgdConfig group_sgd = sgd;
        group_sgd.seed = group_seed;
        NetworkParams init = init_params<float>(spec, members.front()->data.shape(), group_seed);
        models[g] = train_network(spec, std::move(init), tx, ty, vx, vy, group_sgd);
    }
    return models;
}

ClassifierOutputs run_group_cnns(const HyperCube& cube, const BandGroupSet& groups, const GroupModels& models,
                                 const NetworkSpec& spec) {
    spec.validate();
    cube.validate();
    if (groups.count() == 0) throw ArgumentError("run_group_cnns: no band groups");
    std::size_t feat = 0;
    for (std::size_t g = 0; g < groups.count(); ++g) {
        const auto it = models.find(g);
        if (it == models.end()) throw ArgumentError("missing trained params for band group " + std::to_string(g));
        const Shape& in = it->second.params.input_shape;
        if (in.size() != 4 || in[2] != groups.groups[g].size() || in[3] != 1) {
            throw ShapeError("band group " + std::to_string(g) + " params expect input " + shape_to_string(in) +
                             " but the group has " + std::to_string(groups.groups[g].size()) + " bands");
        }
        const Shape probe = forward(spec, it->second.params, Tensor(in)).features().shape();
        const std::size_t c = shape_volume(probe);
        if (g > 0 && c != feat) throw ShapeError("band groups emit feature vectors of different widths");
        feat = c;
    }

    const std::size_t H = cube.height, W = cube.width, G = groups.count(), K = spec.num_outputs();
    ClassifierOutputs out;
    out.classification.labels = LabelMap(H, W);
    out.classification.posteriors = BasicTensor<float>(Shape{H, W, K});
    out.features.values = Tensor(Shape{H, W, G, feat});
    out.features.groups = groups.groups;

    std::vector<double> post(H * W * K, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t pix = 0; pix < std::ptrdiff_t(H * W); ++pix) {
        const std::size_t r = std::size_t(pix) / W, c = std::size_t(pix) % W;
        for (std::size_t g = 0; g < G; ++g) {
            const NetworkParams& params = models.at(g).params;
            const PatchExtent ext{params.input_shape[0], params.input_shape[1]};
            const ForwardTrace<float> tr = forward(spec, params, extract_patch(cube, groups.groups[g], {r, c}, ext));
            const std::vector<float> p = softmax<float>(tr.logits().data());
            for (std::size_t k = 0; k < K; ++k) post[std::size_t(pix) * K + k] += double(p[k]);
            const auto f = tr.features().data();
            std::copy(f.begin(), f.end(), &out.features.values.at(r, c, g, 0));
        }
    }
    for (std::size_t pix = 0; pix < H * W; ++pix) {
        std::size_t best = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const double v = post[pix * K + k] / double(G);
            out.classification.posteriors[pix * K + k] = float(v);
            if (v > post[pix * K + best] / double(G)) best = k;
        }
        out.classification.labels.labels[pix] = std::uint16_t(best + 1);
    }
    if (!out.features.values.all_finite()) throw NumericError("feature map contains non-finite values");
    return out;
}

Classification classify_pixels(const HyperCube& cube, const BandGroupSet& groups, const GroupModels& models,
                               const NetworkSpec& spec) {
    return run_group_cnns(cube, groups, models, spec).classification;
}

FeatureMap extract_feature_map(const HyperCube& cube, const BandGroupSet& groups, const GroupModels& models,
                               const NetworkSpec& spec) {
    return run_group_cnns(cube, groups, models, spec).features;
}

} // namespace hsi
