#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hsiseg/classifier.hpp"
#include "hsiseg/refiner.hpp"

namespace hsi {

/// 4-connected voxel graph. Node index is (r * W + c) * Z + z, matching the voxel
/// order of the feature tensor. Horizontal edges (r,c,z)-(r,c+1,z) come first in
/// (r, c, z) order over H x (W-1) x Z, then vertical edges (r,c,z)-(r+1,c,z) over
/// (H-1) x W x Z.
struct CrfGraph {
    struct Edge {
        std::size_t p = 0;
        std::size_t q = 0;
    };

    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t depth = 0;
    std::size_t num_labels = 0;
    /// (H, W, Z, C) voxel features.
    Tensor features;
    std::vector<Edge> edges;
    /// Incident edges of node p: incident[offsets[p] .. offsets[p + 1]).
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> incident;

    std::size_t node_count() const { return height * width * depth; }
    std::size_t edge_count() const { return edges.size(); }
    std::size_t horizontal_edge_count() const { return height * (width > 0 ? width - 1 : 0) * depth; }
    std::size_t node(std::size_t r, std::size_t c, std::size_t z) const { return (r * width + c) * depth + z; }
};

CrfGraph build_graph(const Tensor& features, std::size_t num_labels);
inline CrfGraph build_graph(const FeatureMap& fm, std::size_t num_labels) {
    return build_graph(fm.values, num_labels);
}

/// phi(p, l), row-major M x K.
struct UnaryTable {
    std::size_t nodes = 0;
    std::size_t labels = 0;
    std::vector<double> values;

    double& at(std::size_t p, std::size_t l) { return values[p * labels + l]; }
    double at(std::size_t p, std::size_t l) const { return values[p * labels + l]; }
};

/// psi(e, l_p, l_q), row-major N x K x K; the first label belongs to edge.p.
struct PairwiseTable {
    std::size_t edges = 0;
    std::size_t labels = 0;
    std::vector<double> values;

    double& at(std::size_t e, std::size_t a, std::size_t b) { return values[(e * labels + a) * labels + b]; }
    double at(std::size_t e, std::size_t a, std::size_t b) const { return values[(e * labels + a) * labels + b]; }
};

/// Potts compatibility: 1 off the diagonal, 0 on it.
std::vector<double> potts_compatibility(std::size_t num_labels);

struct PotentialNets {
    NetworkSpec unary_spec;
    NetworkParams unary;
    NetworkSpec pairwise_spec;
    NetworkParams pairwise;
    /// K x K compatibility, row-major.
    std::vector<double> mu;
    RefinerPlacement placement = RefinerPlacement::pairwise;
    RefinerSpec refiner_spec;
    RefinerParams<float> refiner;

    std::size_t num_labels() const { return unary_spec.num_outputs(); }
    void validate() const;
};

/// Fresh nets on a feature map with `channels` channels per voxel: the unary net
/// maps C -> K, the pairwise net 2C -> K^2, and the refiner mirrors the net on the
/// selected path.
PotentialNets init_potential_nets(const NetworkSpec& unary_spec, const NetworkSpec& pairwise_spec,
                                  std::size_t channels, RefinerPlacement placement, std::uint64_t seed);

/// Edge feature grids [f_p ; f_q]: horizontal (H, W-1, Z, 2C) and vertical (H-1, W, Z, 2C).
std::pair<Tensor, Tensor> edge_inputs(const Tensor& features);

/// phi = -log softmax over each voxel's K logits; `logits` is (H, W, Z, K).
UnaryTable unary_from_logits(const CrfGraph& graph, const Tensor& logits);
/// delta = -log softmax over each edge's K^2 logits, flat index k -> (k / K, k % K);
/// psi = mu * delta.
PairwiseTable pairwise_from_logits(const CrfGraph& graph, const Tensor& horizontal, const Tensor& vertical,
                                   const std::vector<double>& mu);

UnaryTable unary_potentials(const CrfGraph& graph, const PotentialNets& nets);
PairwiseTable pairwise_potentials(const CrfGraph& graph, const PotentialNets& nets);

struct KernelParams {
    double w1 = 1.0;
    double w2 = 1.0;
    std::array<double, 2> theta_alpha{3.0, 3.0}; // rows, cols
    double theta_gamma = 1.0;

    void validate() const;
};

/// theta_gamma = 0.1 * (max - min) over the feature values; other fields at defaults.
KernelParams default_kernel_params(const Tensor& features);

/// k = k1 + k2 per edge, the appearance term using `appearance` (H, W, Z, S) when
/// given and the graph features otherwise.
std::vector<double> gaussian_edge_weights(const CrfGraph& graph, const KernelParams& kp,
                                          const Tensor* appearance = nullptr);

/// Q(p, l), row-major M x K.
struct MarginalField {
    std::size_t nodes = 0;
    std::size_t labels = 0;
    std::vector<double> q;

    double at(std::size_t p, std::size_t l) const { return q[p * labels + l]; }
};

struct MeanFieldOptions {
    std::size_t iterations = 10;
    /// Stop once the largest per-node total-variation change falls below this.
    double tolerance = 1e-4;
};

struct MeanFieldResult {
    MarginalField marginals;
    std::size_t iterations_run = 0;
};

MeanFieldResult mean_field_infer(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                                 const std::vector<double>& edge_weights, const MeanFieldOptions& options = {});
MeanFieldResult mean_field_infer(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                                 const KernelParams& kp, const MeanFieldOptions& options = {});

/// E(l) = sum_p phi(p, l_p) + sum_e k_e psi(e, l_p, l_q).
double crf_energy(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                  const std::vector<double>& edge_weights, const std::vector<std::size_t>& labeling);

struct ExactResult {
    MarginalField marginals;
    std::vector<std::size_t> map_labeling;
    double map_energy = 0.0;
};

/// Enumerates every labeling. Requires K^M <= 1e6.
ExactResult exact_infer_oracle(const CrfGraph& graph, const UnaryTable& phi, const PairwiseTable& psi,
                               const std::vector<double>& edge_weights);

/// One training graph with per-voxel labels (1-based, 0 = masked out).
struct TrainingGraph {
    Tensor features;
    std::vector<std::uint16_t> labels;
};

struct PiecewiseLoss {
    double loss = 0.0;
    std::size_t unary_terms = 0;
    std::size_t pairwise_terms = 0;
};

template <typename T>
struct BasicPiecewiseGrads {
    BasicNetworkParams<T> unary;
    BasicNetworkParams<T> pairwise;
    std::optional<RefinerParams<T>> refiner;
};
using PiecewiseGrads = BasicPiecewiseGrads<float>;

/// -sum log P_phi(l_p) - sum log P_psi(l_p, l_q) over labeled nodes and edges with
/// both ends labeled; P_phi and P_psi are the per-node K-way and per-edge
/// K^2-way softmaxes. Gradients are of the summed loss.
PiecewiseLoss piecewise_loss(const TrainingGraph& g, const PotentialNets& nets, PiecewiseGrads* grads = nullptr);

/// Precision-generic form used by piecewise_loss; `refiner` may be null when the
/// placement is none.
template <typename T>
PiecewiseLoss piecewise_loss_t(const BasicTensor<T>& features, const std::vector<std::uint16_t>& labels,
                               const NetworkSpec& unary_spec, const BasicNetworkParams<T>& unary,
                               const NetworkSpec& pairwise_spec, const BasicNetworkParams<T>& pairwise,
                               RefinerPlacement placement, const RefinerSpec& refiner_spec,
                               const RefinerParams<T>* refiner, std::size_t num_labels,
                               BasicPiecewiseGrads<T>* grads = nullptr);

struct PiecewiseCurve {
    std::vector<double> loss; // summed loss per epoch
};

/// SGD over the graph batches; each step uses the loss divided by its term count.
PiecewiseCurve piecewise_train(const std::vector<TrainingGraph>& batches, PotentialNets& nets, const SgdConfig& sgd);

/// Splits a feature map and label map into training tiles of at most tile x tile pixels.
std::vector<TrainingGraph> make_training_tiles(const FeatureMap& fm, const LabelMap& labels, std::size_t tile);

struct Segmentation {
    LabelMap labels;
    /// Per-voxel argmax of Q, (H, W, Z) flattened as node indices.
    std::vector<std::uint16_t> voxel_labels;
    MarginalField marginals;
    std::size_t iterations_run = 0;
};

/// Majority vote across z of each pixel's voxel labels; ties go to the label with
/// the larger summed Q mass, then to the smaller label.
LabelMap collapse_voxels(const CrfGraph& graph, const MarginalField& q);

Segmentation segment(const FeatureMap& fm, const PotentialNets& nets, const KernelParams& kp,
                     const MeanFieldOptions& options = {}, const Tensor* appearance = nullptr);

} // namespace hsi
