#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hsiseg/layers.hpp"

namespace hsi {

enum class LayerKind { conv3d, maxpool, fully_connected, softmax };

/// One layer of a sequential network description.
/// conv3d: `count` kernels of `extents`; fully_connected: `count` units;
/// softmax: a per-location dense map to `count` classes (logits).
struct LayerSpec {
    LayerKind kind = LayerKind::conv3d;
    std::size_t count = 0;
    std::array<std::size_t, 3> extents{1, 1, 1};
    Activation activation = Activation::relu;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    Padding padding = Padding::same;

    /// Last layer is softmax, at least one conv3d, positive counts, odd P and Q.
    void validate() const;
    std::size_t num_outputs() const { return layers.back().count; }
    std::size_t pool_count() const;
    /// 1-based indices of the conv layers followed by a pool.
    std::vector<std::size_t> pooled_conv_layers() const;
    std::size_t conv_count() const;

    /// Line-oriented text form, one layer per line ("conv3d 32 5x5x5 relu").
    std::string serialize() const;
    static NetworkSpec parse(const std::string& text);

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Selects a preset architecture and sizes its layers.
struct NetworkProfile {
    std::string preset;              // e.g. "indian-pines-cls", "pavia-seg", "synthetic-cls"
    std::size_t num_outputs = 0;     // classes, or classes^2 for an edge net
    std::size_t kernel_count = 32;
    std::size_t kernel_extent = 5;   // P = Q = R
    std::size_t fc_units = 64;       // classification presets only
};

/// Preset layer layouts: classification nets have a fully connected layer before
/// the softmax head; segmentation-potential nets are fully convolutional.
NetworkSpec build_network(const NetworkProfile& profile);
std::vector<std::string> preset_names();

/// Learned weights of a NetworkSpec for a fixed input shape.
template <typename T>
struct LayerParams {
    LayerKind kind = LayerKind::conv3d;
    Conv3dLayer<T> conv;   // conv3d and softmax (1x1x1 head)
    DenseLayer<T> dense;   // fully_connected

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <typename T>
struct BasicNetworkParams {
    Shape input_shape;
    std::vector<LayerParams<T>> layers;

    /// Visits every parameter array in declaration order.
    void for_each_array(const std::function<void(std::span<T>)>& fn);
    void for_each_array(const std::function<void(std::span<const T>)>& fn) const;
    std::size_t parameter_count() const;
    /// Same shapes, all zeros.
    BasicNetworkParams zeros_like() const;

    template <typename U>
    BasicNetworkParams<U> cast() const;

    friend bool operator==(const BasicNetworkParams&, const BasicNetworkParams&) = default;
};

using NetworkParams = BasicNetworkParams<float>;

/// Glorot-uniform kernels and zero biases.
template <typename T>
BasicNetworkParams<T> init_params(const NetworkSpec& spec, const Shape& input_shape, std::uint64_t seed);

/// Activations of one forward pass. activations[0] is the input and
/// activations[i + 1] the output of layer i; the last entry holds the logits.
template <typename T>
struct ForwardTrace {
    std::vector<BasicTensor<T>> activations;
    std::vector<std::optional<PoolRecord<T>>> pools;

    const BasicTensor<T>& logits() const { return activations.back(); }
    /// Output of the layer before the softmax head.
    const BasicTensor<T>& features() const { return activations[activations.size() - 2]; }
    /// Pool records in forward order.
    std::vector<const PoolRecord<T>*> pool_records() const;
};

/// Networks without a fully connected layer accept any grid with the right channel count.
template <typename T>
ForwardTrace<T> forward(const NetworkSpec& spec, const BasicNetworkParams<T>& params, const BasicTensor<T>& input);

template <typename T>
struct NetworkGrads {
    BasicNetworkParams<T> params;
    BasicTensor<T> input;
};

/// Back-propagates a gradient on the logits through every layer.
template <typename T>
NetworkGrads<T> backward(const NetworkSpec& spec, const BasicNetworkParams<T>& params, const ForwardTrace<T>& trace,
                         const BasicTensor<T>& grad_logits, bool want_input_grad = false);

/// params <- params - lr * grads over every parameter array.
template <typename T>
void sgd_step(BasicNetworkParams<T>& params, const BasicNetworkParams<T>& grads, double learning_rate);

// HCNN checkpoint: "HCNN", u32 spec length, spec text, u32 rank, u32 extents of
// the input shape, u32 array count, then per array u64 length and f32 values.
void write_checkpoint(const NetworkSpec& spec, const NetworkParams& params, const std::filesystem::path& path);
std::pair<NetworkSpec, NetworkParams> read_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const NetworkSpec& spec, const NetworkParams& params);

} // namespace hsi
