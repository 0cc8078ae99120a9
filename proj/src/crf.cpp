#include "hsiseg/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace hsi {

CrfGraph build_graph(const Tensor& features, std::size_t num_labels) {
    if (num_labels < 2) throw ArgumentError("CRF needs at least 2 labels, got " + std::to_string(num_labels));
    if (features.rank() != 4) {
        throw ShapeError("CRF features must be (row, col, z, channel), got " + shape_to_string(features.shape()));
    }
    CrfGraph g;
    g.height = features.extent(0);
    g.width = features.extent(1);
    g.depth = features.extent(2);
    g.num_labels = num_labels;
    g.features = features;
    const std::size_t H = g.height, W = g.width, Z = g.depth;
    g.edges.reserve(H * (W ? W - 1 : 0) * Z + (H ? H - 1 : 0) * W * Z);
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c + 1 < W; ++c)
            for (std::size_t z = 0; z < Z; ++z) g.edges.push_back({g.node(r, c, z), g.node(r, c + 1, z)});
    for (std::size_t r = 0; r + 1 < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
            for (std::size_t z = 0; z < Z; ++z) g.edges.push_back({g.node(r, c, z), g.node(r + 1, c, z)});

    const std::size_t M = g.node_count();
    std::vector<std::size_t> degree(M, 0);
    for (const auto& e : g.edges) {
        ++degree[e.p];
        ++degree[e.q];
    }
    g.offsets.assign(M + 1, 0);
    for (std::size_t p = 0; p < M; ++p) g.offsets[p + 1] = g.offsets[p] + degree[p];
    g.incident.resize(g.offsets[M]);
    std::vector<std::size_t> fill(g.offsets.begin(), g.offsets.end() - 1);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        g.incident[fill[g.edges[e].p]++] = e;
        g.incident[fill[g.edges[e].q]++] = e;
    }
    return g;
}

std::vector<double> potts_compatibility(std::size_t num_labels) {
    std::vector<double> mu(num_labels * num_labels, 1.0);
    for (std::size_t k = 0; k < num_labels; ++k) mu[k * num_labels + k] = 0.0;
    return mu;
}

void PotentialNets::validate() const {
    unary_spec.validate();
    pairwise_spec.validate();
    const std::size_t K = num_labels();
    if (K < 2) throw ConfigError("unary net must emit at least 2 labels");
    if (pairwise_spec.num_outputs() != K * K) {
        throw ConfigError("pairwise net emits " + std::to_string(pairwise_spec.num_outputs()) + " scores, expected " +
                          std::to_string(K * K));
    }
    if (mu.size() != K * K) throw ConfigError("compatibility matrix must be K x K");
    const std::size_t expected_stages =
        placement == RefinerPlacement::unary      ? unary_spec.pool_count()
        : placement == RefinerPlacement::pairwise ? pairwise_spec.pool_count()
                                                  : 0;
    if (placement != RefinerPlacement::none &&
        (refiner_spec.stages.size() != expected_stages || refiner.stages.size() != expected_stages)) {
        throw ConfigError("refiner stages do not mirror the pooled stages of the " + to_string(placement) + " net");
    }
}

PotentialNets init_potential_nets(const NetworkSpec& unary_spec, const NetworkSpec& pairwise_spec,
                                  std::size_t channels, RefinerPlacement placement, std::uint64_t seed) {
    if (channels == 0) throw ArgumentError("feature map has no channels");
    PotentialNets nets;
    nets.unary_spec = unary_spec;
    nets.pairwise_spec = pairwise_spec;
    nets.unary = init_params<float>(unary_spec, {1, 1, 1, channels}, seed);
    nets.pairwise = init_params<float>(pairwise_spec, {1, 1, 1, 2 * channels}, seed + 1);
    nets.mu = potts_compatibility(unary_spec.num_outputs());
    nets.placement = placement;
    if (placement != RefinerPlacement::none) {
        nets.refiner_spec = build_refiner(placement == RefinerPlacement::unary ? unary_spec : pairwise_spec);
        nets.refiner = init_refiner<float>(nets.refiner_spec, seed + 2);
    }
    nets.validate();
    return nets;
}

namespace {

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> edge_inputs_t(const BasicTensor<T>& f) {
    if (f.rank() != 4) throw ShapeError("edge_inputs: features must be rank 4, got " + shape_to_string(f.shape()));
    const std::size_t H = f.extent(0), W = f.extent(1), Z = f.extent(2), C = f.extent(3);
    BasicTensor<T> h(Shape{H, W ? W - 1 : 0, Z, 2 * C});
    BasicTensor<T> v(Shape{H ? H - 1 : 0, W, Z, 2 * C});
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
            for (std::size_t z = 0; z < Z; ++z)
                for (std::size_t k = 0; k < C; ++k) {
                    const T x = f.at(r, c, z, k);
                    if (c + 1 < W) h.at(r, c, z, k) = x;
                    if (c > 0) h.at(r, c - 1, z, C + k) = x;
                    if (r + 1 < H) v.at(r, c, z, k) = x;
                    if (r > 0) v.at(r - 1, c, z, C + k) = x;
                }
    return {std::move(h), std::move(v)};
}

void check_finite(std::span<const float> v, const char* what) {
    for (float x : v)
        if (!std::isfinite(x)) throw NumericError(std::string(what) + " produced a non-finite value");
}

template <typename T>
const RefinerParams<T>* refiner_for(RefinerPlacement placement, RefinerPlacement path, const RefinerParams<T>* r) {
    return placement == path ? r : nullptr;
}

template <typename T>
void add_into(BasicNetworkParams<T>& acc, const BasicNetworkParams<T>& g) {
    std::vector<std::span<const T>> src;
    g.for_each_array(std::function<void(std::span<const T>)>([&](std::span<const T> s) { src.push_back(s); }));
    std::size_t i = 0;
    acc.for_each_array(std::function<void(std::span<T>)>([&](std::span<T> s) {
        for (std::size_t k = 0; k < s.size(); ++k) s[k] += src[i][k];
        ++i;
    }));
}

template <typename T>
void add_into(RefinerParams<T>& acc, const RefinerParams<T>& g) {
    std::vector<std::span<const T>> src;
    g.for_each_array(std::function<void(std::span<const T>)>([&](std::span<const T> s) { src.push_back(s); }));
    std::size_t i = 0;
    acc.for_each_array(std::function<void(std::span<T>)>([&](std::span<T> s) {
        for (std::size_t k = 0; k < s.size(); ++k) s[k] += src[i][k];
        ++i;
    }));
}

} // namespace

std::pair<Tensor, Tensor> edge_inputs(const Tensor& features) { return edge_inputs_t(features); }

UnaryTable unary_from_logits(const CrfGraph& graph, const Tensor& logits) {
    const std::size_t K = graph.num_labels;
    require_same_shape(Shape{graph.height, graph.width, graph.depth, K}, logits.shape(), "unary logits");
    check_finite(logits.data(), "unary net");
    UnaryTable t{graph.node_count(), K, std::vector<double>(graph.node_count() * K)};
    std::vector<double> row(K);
    for (std::size_t p = 0; p < t.nodes; ++p) {
        for (std::size_t l = 0; l < K; ++l) row[l] = double(logits[p * K + l]);
        const std::vector<double> ls = log_softmax<double>(row);
        for (std::size_t l = 0; l < K; ++l) t.at(p, l) = -ls[l];
    }
    return t;
}

PairwiseTable pairwise_from_logits(const CrfGraph& graph, const Tensor& horizontal, const Tensor& vertical,
                                   const std::vector<double>& mu) {
    const std::size_t K = graph.num_labels, KK = K * K;
    const std::size_t H = graph.height, W = graph.width, Z = graph.depth;
    require_same_shape(Shape{H, W ? W - 1 : 0, Z, KK}, horizontal.shape(), "horizontal edge logits");
    require_same_shape(Shape{H ? H - 1 : 0, W, Z, KK}, vertical.shape(), "vertical edge logits");
    if (mu.size() != KK) throw ShapeError("compatibility matrix must hold K x K values");
    check_finite(horizontal.data(), "pairwise net");
    check_finite(vertical.data(), "pairwise net");
    PairwiseTable t{graph.edge_count(), K, std::vector<double>(graph.edge_count() * KK)};
    const std::size_t nh = graph.horizontal_edge_count();
    std::vector<double> row(KK);
    for (std::size_t e = 0; e < t.edges; ++e) {
        const float* src = e < nh ? &horizontal[e * KK] : &vertical[(e - nh) * KK];
        for (std::size_t k = 0; k < KK; ++k) row[k] = double(src[k]);
        const std::vector<double> ls = log_softmax<double>(row);
        for (std::size_t k = 0; k < KK; ++k) t.values[e * KK + k] = mu[k] * -ls[k];
    }
    return t;
}

UnaryTable unary_potentials(const CrfGraph& graph, const PotentialNets& nets) {
    nets.validate();
    if (nets.num_labels() != graph.num_labels) throw ShapeError("unary net label count differs from the graph");
    const auto* rs = nets.placement == RefinerPlacement::unary ? &nets.refiner_spec : nullptr;
    const auto* rp = refiner_for(nets.placement, RefinerPlacement::unary, &nets.refiner);
    const PathOutput<float> out = path_forward(nets.unary_spec, nets.unary, rs, rp, graph.features);
    return unary_from_logits(graph, out.fine);
}

PairwiseTable pairwise_potentials(const CrfGraph& graph, const PotentialNets& nets) {
    nets.validate();
    if (nets.num_labels() != graph.num_labels) throw ShapeError("pairwise net label count differs from the graph");
    const std::size_t KK = graph.num_labels * graph.num_labels;
    const auto* rs = nets.placement == RefinerPlacement::pairwise ? &nets.refiner_spec : nullptr;
    const auto* rp = refiner_for(nets.placement, RefinerPlacement::pairwise, &nets.refiner);
    auto [h_in, v_in] = edge_inputs(graph.features);
    auto run = [&](const Tensor& in) {
        if (in.size() == 0) return Tensor(Shape{in.extent(0), in.extent(1), in.extent(2), KK});
        return path_forward(nets.pairwise_spec, nets.pairwise, rs, rp, in).fine;
    };
    return pairwise_from_logits(graph, run(h_in), run(v_in), nets.mu);
}

void KernelParams::validate() const {
    if (!(w1 >= 0.0) || !(w2 >= 0.0)) throw ConfigError("kernel weights must be non-negative");
    if (!(theta_alpha[0] > 0.0) || !(theta_alpha[1] > 0.0) || !(theta_gamma > 0.0)) {
        throw ConfigError("kernel bandwidths must be positive");
    }
}

KernelParams default_kernel_params(const Tensor& features) {
    KernelParams kp;
    if (features.size() > 0) {
        const auto [lo, hi] = std::minmax_element(features.storage().begin(), features.storage().end());
        const double range = double(*hi) - double(*lo);
        if (range > 0.0) kp.theta_gamma = 0.1 * range;
    }
    return kp;
}

std::vector<double> gaussian_edge_weights(const CrfGraph& graph, const KernelParams& kp, const Tensor* appearance) {
    kp.validate();
    const Tensor& f = appearance ? *appearance : graph.features;
    if (f.rank() != 4 || f.extent(0) != graph.height || f.extent(1) != graph.width || f.extent(2) != graph.depth) {
        throw ShapeError("appearance values " + shape_to_string(f.shape()) + " do not cover the graph grid");
    }
    const std::size_t S = f.extent(3);
    const std::size_t nh = graph.horizontal_edge_count();
    std::vector<double> k(graph.edge_count());
    for (std::size_t e = 0; e < k.size(); ++e) {
        const double dr = e < nh ? 0.0 : 1.0, dc = e < nh ? 1.0 : 0.0;
        const double spatial = dr * dr / (2.0 * kp.theta_alpha[0] * kp.theta_alpha[0]) +
                               dc * dc / (2.0 * kp.theta_alpha[1] * kp.theta_alpha[1]);
        const float* a = &f[graph.edges[e].p * S];
        const float* b = &f[graph.edges[e].q * S];
        double spectral = 0.0;
        for (std::size_t s = 0; s < S; ++s) spectral += (double(a[s]) - b[s]) * (double(a[s]) - b[s]);
        spectral /= 2.0 * kp.theta_gamma * kp.theta_gamma;
        k[e] = kp.w1 * std::exp(-spatial) + kp.w2 * std::exp(-spatial - spectral);
    }
    return k;
}

namespace {

void check_tables(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                  const std::vector<double>& w) {
    const std::size_t K = graph.num_labels;
    if (phi.nodes != graph.node_count() || phi.labels != K || phi.values.size() != phi.nodes * K) {
        throw ShapeError("unary table does not match the graph");
    }
    if (psi.edges != graph.edge_count() || psi.labels != K || psi.values.size() != psi.edges * K * K) {
        throw ShapeError("pairwise table does not match the graph");
    }
    if (w.size() != graph.edge_count()) throw ShapeError("edge weight count does not match the graph");
}

} // namespace

MeanFieldResult mean_field_infer(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                                 const std::vector<double>& edge_weights, const MeanFieldOptions& options) {
    check_tables(graph, phi, psi, edge_weights);
    const std::size_t M = graph.node_count(), K = graph.num_labels;
    MeanFieldResult res;
    res.marginals = {M, K, std::vector<double>(M * K)};
    std::vector<double>& Q = res.marginals.q;
    {
        std::vector<double> row(K);
        for (std::size_t p = 0; p < M; ++p) {
            for (std::size_t l = 0; l < K; ++l) row[l] = -phi.at(p, l);
            const auto s = softmax<double>(row);
            std::copy(s.begin(), s.end(), &Q[p * K]);
        }
    }
    std::vector<double> next(M * K);
    for (std::size_t it = 0; it < options.iterations; ++it) {
        double change = 0.0;
        bool finite = true;
#pragma omp parallel for schedule(static) reduction(max : change) reduction(&& : finite)
        for (std::ptrdiff_t pi = 0; pi < std::ptrdiff_t(M); ++pi) {
            const std::size_t p = std::size_t(pi);
            std::vector<double> row(K);
            for (std::size_t l = 0; l < K; ++l) row[l] = -phi.at(p, l);
            for (std::size_t j = graph.offsets[p]; j < graph.offsets[p + 1]; ++j) {
                const std::size_t e = graph.incident[j];
                const bool first = graph.edges[e].p == p;
                const std::size_t q = first ? graph.edges[e].q : graph.edges[e].p;
                const double w = edge_weights[e];
                for (std::size_t l = 0; l < K; ++l) {
                    double m = 0.0;
                    for (std::size_t l2 = 0; l2 < K; ++l2) {
                        m += (first ? psi.at(e, l, l2) : psi.at(e, l2, l)) * Q[q * K + l2];
                    }
                    row[l] -= w * m;
                }
            }
            double tv = 0.0;
            bool ok = true;
            for (double v : row) ok = ok && std::isfinite(v);
            if (ok) {
                const auto s = softmax<double>(row);
                for (std::size_t l = 0; l < K; ++l) {
                    next[p * K + l] = s[l];
                    tv += std::abs(s[l] - Q[p * K + l]);
                }
            }
            finite = finite && ok;
            change = std::max(change, 0.5 * tv);
        }
        if (!finite) {
            throw NumericError("mean-field produced a non-finite value at iteration " + std::to_string(it + 1));
        }
        Q.swap(next);
        res.iterations_run = it + 1;
        if (change < options.tolerance) break;
    }
    return res;
}

MeanFieldResult mean_field_infer(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                                 const KernelParams& kp, const MeanFieldOptions& options) {
    return mean_field_infer(graph, phi, psi, gaussian_edge_weights(graph, kp), options);
}

double crf_energy(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                  const std::vector<double>& edge_weights, const std::vector<std::size_t>& labeling) {
    check_tables(graph, phi, psi, edge_weights);
    if (labeling.size() != graph.node_count()) throw ShapeError("labeling size does not match the graph");
    double e = 0.0;
    for (std::size_t p = 0; p < labeling.size(); ++p) e += phi.at(p, labeling[p]);
    for (std::size_t k = 0; k < graph.edge_count(); ++k) {
        e += edge_weights[k] * psi.at(k, labeling[graph.edges[k].p], labeling[graph.edges[k].q]);
    }
    return e;
}

ExactResult exact_infer_oracle(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                               const std::vector<double>& edge_weights) {
    check_tables(graph, phi, psi, edge_weights);
    const std::size_t M = graph.node_count(), K = graph.num_labels;
    double states = 1.0;
    for (std::size_t p = 0; p < M; ++p) states *= double(K);
    if (states > 1e6) {
        throw ArgumentError("exact inference limited to K^M <= 1e6, instance has " + std::to_string(K) + "^" +
                            std::to_string(M));
    }
    const std::size_t n = std::size_t(states);
    std::vector<double> energy(n);
    std::vector<std::size_t> lab(M, 0);
    ExactResult res;
    res.map_energy = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < n; ++s) {
        energy[s] = crf_energy(graph, phi, psi, edge_weights, lab);
        if (energy[s] < res.map_energy) {
            res.map_energy = energy[s];
            res.map_labeling = lab;
        }
        for (std::size_t p = 0; p < M && ++lab[p] == K; ++p) lab[p] = 0;
    }
    res.marginals = {M, K, std::vector<double>(M * K, 0.0)};
    double z = 0.0;
    std::fill(lab.begin(), lab.end(), 0);
    for (std::size_t s = 0; s < n; ++s) {
        const double w = std::exp(res.map_energy - energy[s]);
        z += w;
        for (std::size_t p = 0; p < M; ++p) res.marginals.q[p * K + lab[p]] += w;
        for (std::size_t p = 0; p < M && ++lab[p] == K; ++p) lab[p] = 0;
    }
    for (double& v : res.marginals.q) v /= z;
    return res;
}

template <typename T>
PiecewiseLoss piecewise_loss_t(const BasicTensor<T>& features, const std::vector<std::uint16_t>& labels,
                               const NetworkSpec& unary_spec, const BasicNetworkParams<T>& unary,
                               const NetworkSpec& pairwise_spec, const BasicNetworkParams<T>& pairwise,
                               RefinerPlacement placement, const RefinerSpec& refiner_spec,
                               const RefinerParams<T>* refiner, std::size_t K, BasicPiecewiseGrads<T>* grads) {
    if (features.rank() != 4) throw ShapeError("training features must be rank 4");
    const std::size_t H = features.extent(0), W = features.extent(1), Z = features.extent(2);
    if (labels.size() != H * W * Z) {
        throw ArgumentError("training graph has " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(H * W * Z) + " voxels");
    }
    for (auto l : labels) {
        if (l > K) throw ArgumentError("training label " + std::to_string(l) + " exceeds " + std::to_string(K));
    }
    if (placement != RefinerPlacement::none && !refiner) throw ArgumentError("refiner params missing");
    const std::size_t KK = K * K;
    PiecewiseLoss out;

    const RefinerSpec* urs = placement == RefinerPlacement::unary ? &refiner_spec : nullptr;
    const RefinerParams<T>* urp = placement == RefinerPlacement::unary ? refiner : nullptr;
    const RefinerSpec* prs = placement == RefinerPlacement::pairwise ? &refiner_spec : nullptr;
    const RefinerParams<T>* prp = placement == RefinerPlacement::pairwise ? refiner : nullptr;

    const PathOutput<T> u = path_forward(unary_spec, unary, urs, urp, features);
    require_same_shape(Shape{H, W, Z, K}, u.fine.shape(), "unary logits");
    BasicTensor<T> gu(u.fine.shape());
    std::vector<T> row_grad(KK);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        if (labels[p] == kUnlabeled) continue;
        const std::span<const T> logits(&u.fine[p * K], K);
        out.loss += softmax_cross_entropy<T>(logits, labels[p] - 1, std::span<T>(&gu[p * K], K));
        ++out.unary_terms;
    }

    if (grads) {
        grads->unary = unary.zeros_like();
        grads->pairwise = pairwise.zeros_like();
        grads->refiner.reset();
        if (refiner && placement != RefinerPlacement::none) grads->refiner = refiner->zeros_like();
        PathGrads<T> pg = path_backward(unary_spec, unary, urs, urp, u, gu);
        grads->unary = std::move(pg.net);
        if (pg.refiner) grads->refiner = std::move(*pg.refiner);
    }

    auto [h_in, v_in] = edge_inputs_t(features);
    for (int dir = 0; dir < 2; ++dir) {
        const BasicTensor<T>& in = dir == 0 ? h_in : v_in;
        if (in.size() == 0) continue;
        const PathOutput<T> pw = path_forward(pairwise_spec, pairwise, prs, prp, in);
        require_same_shape(Shape{in.extent(0), in.extent(1), Z, KK}, pw.fine.shape(), "pairwise logits");
        BasicTensor<T> gp(pw.fine.shape());
        bool any = false;
        for (std::size_t r = 0; r < in.extent(0); ++r)
            for (std::size_t c = 0; c < in.extent(1); ++c)
                for (std::size_t z = 0; z < Z; ++z) {
                    const std::size_t p = (r * W + c) * Z + z;
                    const std::size_t q = dir == 0 ? (r * W + c + 1) * Z + z : ((r + 1) * W + c) * Z + z;
                    if (labels[p] == kUnlabeled || labels[q] == kUnlabeled) continue;
                    const std::size_t e = (r * in.extent(1) + c) * Z + z;
                    const std::size_t target = std::size_t(labels[p] - 1) * K + std::size_t(labels[q] - 1);
                    out.loss += softmax_cross_entropy<T>(std::span<const T>(&pw.fine[e * KK], KK), target,
                                                         std::span<T>(&gp[e * KK], KK));
                    ++out.pairwise_terms;
                    any = true;
                }
        if (grads && any) {
            PathGrads<T> pg = path_backward(pairwise_spec, pairwise, prs, prp, pw, gp);
            add_into(grads->pairwise, pg.net);
            if (pg.refiner) add_into(*grads->refiner, *pg.refiner);
        }
    }
    return out;
}

PiecewiseLoss piecewise_loss(const TrainingGraph& g, const PotentialNets& nets, PiecewiseGrads* grads) {
    nets.validate();
    return piecewise_loss_t<float>(g.features, g.labels, nets.unary_spec, nets.unary, nets.pairwise_spec,
                                   nets.pairwise, nets.placement, nets.refiner_spec,
                                   nets.placement == RefinerPlacement::none ? nullptr : &nets.refiner,
                                   nets.num_labels(), grads);
}

PiecewiseCurve piecewise_train(const std::vector<TrainingGraph>& batches, PotentialNets& nets, const SgdConfig& sgd) {
    nets.validate();
    sgd.validate();
    if (batches.empty()) throw ArgumentError("piecewise_train: no training graphs");
    bool labeled = false;
    for (const auto& b : batches)
        for (auto l : b.labels) labeled = labeled || l != kUnlabeled;
    if (!labeled) throw ArgumentError("piecewise_train: training graphs carry no labels");

    PiecewiseCurve curve;
    std::mt19937_64 rng(sgd.seed);
    std::vector<std::size_t> order(batches.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t b : order) {
            PiecewiseGrads g;
            const PiecewiseLoss l = piecewise_loss(batches[b], nets, &g);
            if (!std::isfinite(l.loss)) {
                throw NumericError("piecewise training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch + 1));
            }
            total += l.loss;
            const std::size_t terms = l.unary_terms + l.pairwise_terms;
            if (terms == 0) continue;
            const double lr = sgd.learning_rate / double(terms);
            sgd_step(nets.unary, g.unary, lr);
            sgd_step(nets.pairwise, g.pairwise, lr);
            if (g.refiner) {
                std::vector<std::span<const float>> src;
                g.refiner->for_each_array(
                    std::function<void(std::span<const float>)>([&](std::span<const float> s) { src.push_back(s); }));
                std::size_t i = 0;
                nets.refiner.for_each_array(std::function<void(std::span<float>)>(
                    [&](std::span<float> s) { sgd_step<float>(s, src[i++], lr); }));
            }
        }
        curve.loss.push_back(total);
    }
    return curve;
}

std::vector<TrainingGraph> make_training_tiles(const FeatureMap& fm, const LabelMap& labels, std::size_t tile) {
    if (tile == 0) throw ArgumentError("tile size must be positive");
    const std::size_t H = fm.height(), W = fm.width(), Z = fm.depth(), C = fm.channels();
    require_same_extents(labels, H, W, "CRF training labels");
    std::vector<TrainingGraph> out;
    for (std::size_t r0 = 0; r0 < H; r0 += tile)
        for (std::size_t c0 = 0; c0 < W; c0 += tile) {
            const std::size_t h = std::min(tile, H - r0), w = std::min(tile, W - c0);
            TrainingGraph g;
            g.features = Tensor(Shape{h, w, Z, C});
            g.labels.assign(h * w * Z, kUnlabeled);
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < w; ++c)
                    for (std::size_t z = 0; z < Z; ++z) {
                        std::copy_n(&fm.values.at(r0 + r, c0 + c, z, 0), C, &g.features.at(r, c, z, 0));
                        g.labels[(r * w + c) * Z + z] = labels.at(r0 + r, c0 + c);
                    }
            out.push_back(std::move(g));
        }
    return out;
}

LabelMap collapse_voxels(const CrfGraph& graph, const MarginalField& q) {
    const std::size_t K = graph.num_labels, Z = graph.depth;
    if (q.nodes != graph.node_count() || q.labels != K) throw ShapeError("marginals do not match the graph");
    LabelMap out(graph.height, graph.width);
    std::vector<std::size_t> votes(K);
    std::vector<double> mass(K);
    for (std::size_t pix = 0; pix < graph.height * graph.width; ++pix) {
        std::fill(votes.begin(), votes.end(), 0);
        std::fill(mass.begin(), mass.end(), 0.0);
        for (std::size_t z = 0; z < Z; ++z) {
            const std::size_t p = pix * Z + z;
            std::size_t best = 0;
            for (std::size_t l = 1; l < K; ++l)
                if (q.at(p, l) > q.at(p, best)) best = l;
            ++votes[best];
            for (std::size_t l = 0; l < K; ++l) mass[l] += q.at(p, l);
        }
        std::size_t win = 0;
        for (std::size_t l = 1; l < K; ++l) {
            if (votes[l] > votes[win] || (votes[l] == votes[win] && mass[l] > mass[win])) win = l;
        }
        out.labels[pix] = std::uint16_t(win + 1);
    }
    return out;
}

Segmentation segment(const FeatureMap& fm, const PotentialNets& nets, const KernelParams& kp,
                     const MeanFieldOptions& options, const Tensor* appearance) {
    const CrfGraph graph = build_graph(fm, nets.num_labels());
    const UnaryTable phi = unary_potentials(graph, nets);
    const PairwiseTable psi = pairwise_potentials(graph, nets);
    MeanFieldResult mf = mean_field_infer(graph, phi, psi, gaussian_edge_weights(graph, kp, appearance), options);
    Segmentation seg;
    seg.labels = collapse_voxels(graph, mf.marginals);
    seg.voxel_labels.resize(graph.node_count());
    for (std::size_t p = 0; p < graph.node_count(); ++p) {
        std::size_t best = 0;
        for (std::size_t l = 1; l < graph.num_labels; ++l)
            if (mf.marginals.at(p, l) > mf.marginals.at(p, best)) best = l;
        seg.voxel_labels[p] = std::uint16_t(best + 1);
    }
    seg.marginals = std::move(mf.marginals);
    seg.iterations_run = mf.iterations_run;
    return seg;
}

template PiecewiseLoss piecewise_loss_t<float>(const BasicTensor<float>&, const std::vector<std::uint16_t>&,
                                               const NetworkSpec&, const BasicNetworkParams<float>&,
                                               const NetworkSpec&, const BasicNetworkParams<float>&,
                                               RefinerPlacement, const RefinerSpec&, const RefinerParams<float>*,
                                               std::size_t, BasicPiecewiseGrads<float>*);
template PiecewiseLoss piecewise_loss_t<double>(const BasicTensor<double>&, const std::vector<std::uint16_t>&,
                                                const NetworkSpec&, const BasicNetworkParams<double>&,
                                                const NetworkSpec&, const BasicNetworkParams<double>&,
                                                RefinerPlacement, const RefinerSpec&, const RefinerParams<double>*,
                                                std::size_t, BasicPiecewiseGrads<double>*);

} // namespace hsi
