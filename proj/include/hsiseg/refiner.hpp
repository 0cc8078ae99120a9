#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hsiseg/network.hpp"

namespace hsi {

/// Which potential path, if any, restores resolution with the deconvolution network.
enum class RefinerPlacement { none, unary, pairwise };

std::string to_string(RefinerPlacement p);
RefinerPlacement refiner_placement_from_string(const std::string& s);

/// One stage per pooling layer of the paired net, applied deepest pool first:
/// deconv3d (current channels -> channels of the pooled activation), ReLU, unpool.
/// A final deconv3d without activation projects back to the logit width.
struct RefinerStage {
    std::array<std::size_t, 3> extents{1, 1, 1};
    std::size_t channels = 0;

    friend bool operator==(const RefinerStage&, const RefinerStage&) = default;
};

struct RefinerSpec {
    std::vector<RefinerStage> stages;
    std::array<std::size_t, 3> final_extents{1, 1, 1};
    std::size_t channels = 0; // logit width in and out

    bool identity() const { return stages.empty(); }
    friend bool operator==(const RefinerSpec&, const RefinerSpec&) = default;
};

/// Mirrors the pooled stages of `net`: stage kernels take the extents of the conv
/// layer feeding each pool, the final projection those of the first conv layer.
RefinerSpec build_refiner(const NetworkSpec& net);

template <typename T>
struct RefinerParams {
    std::vector<Deconv3dLayer<T>> stages;
    Deconv3dLayer<T> final;

    void for_each_array(const std::function<void(std::span<T>)>& fn);
    void for_each_array(const std::function<void(std::span<const T>)>& fn) const;
    std::size_t parameter_count() const;
    RefinerParams zeros_like() const;
    template <typename U>
    RefinerParams<U> cast() const;

    friend bool operator==(const RefinerParams&, const RefinerParams&) = default;
};

/// Bilinear-like spatial profile (1 at the centre tap, halving per step in x and y,
/// centre slice only along z) scaled by Glorot-uniform channel mixing.
template <typename T>
RefinerParams<T> init_refiner(const RefinerSpec& spec, std::uint64_t seed);

// HRFN checkpoint: "HRFN", u32 array count, then per array a u64 length and that
// many little-endian f32 values, in for_each_array order. Shapes come from the spec.
std::string refiner_bytes(const RefinerParams<float>& params);
void write_refiner(const RefinerParams<float>& params, const std::filesystem::path& path);
RefinerParams<float> read_refiner(const RefinerSpec& spec, const std::filesystem::path& path);

template <typename T>
struct RefineTrace {
    std::vector<BasicTensor<T>> inputs;   // input of each stage's deconv
    std::vector<BasicTensor<T>> hidden;   // each stage's deconv output after ReLU
    BasicTensor<T> final_input;
    BasicTensor<T> output;
};

/// `records` are the pool records of the paired forward pass, in forward order.
template <typename T>
RefineTrace<T> refine(const BasicTensor<T>& logits, const std::vector<const PoolRecord<T>*>& records,
                      const RefinerSpec& spec, const RefinerParams<T>& params);

template <typename T>
struct RefinerGrads {
    RefinerParams<T> params;
    BasicTensor<T> input;
};

template <typename T>
RefinerGrads<T> refine_backward(const std::vector<const PoolRecord<T>*>& records, const RefinerSpec& spec,
                                const RefinerParams<T>& params, const RefineTrace<T>& trace,
                                const BasicTensor<T>& grad_output);

/// A potential net followed by either the refiner or nearest-neighbour upsampling
/// back to the input grid.
template <typename T>
struct PathOutput {
    ForwardTrace<T> net;
    std::optional<RefineTrace<T>> refined;
    BasicTensor<T> fine;
};

template <typename T>
struct PathGrads {
    BasicNetworkParams<T> net;
    std::optional<RefinerParams<T>> refiner;
    BasicTensor<T> input;
};

template <typename T>
PathOutput<T> path_forward(const NetworkSpec& spec, const BasicNetworkParams<T>& params,
                           const RefinerSpec* refiner_spec, const RefinerParams<T>* refiner,
                           const BasicTensor<T>& input);

template <typename T>
PathGrads<T> path_backward(const NetworkSpec& spec, const BasicNetworkParams<T>& params,
                           const RefinerSpec* refiner_spec, const RefinerParams<T>* refiner,
                           const PathOutput<T>& out, const BasicTensor<T>& grad_fine, bool want_input_grad = false);

} // namespace hsi
