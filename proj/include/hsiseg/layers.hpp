#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hsiseg/tensor.hpp"

namespace hsi {

enum class Activation { identity, relu, sigmoid };
enum class Padding { valid, same };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(Padding p);
Padding padding_from_string(const std::string& s);

/// 3D convolution over (row, col, z, channel) activations.
/// `kernels` has shape (m_in, P, Q, R, m_out) and `biases` holds m_out values.
template <typename T>
struct Conv3dLayer {
    BasicTensor<T> kernels;
    std::vector<T> biases;
    Activation activation = Activation::identity;

    std::size_t in_maps() const { return kernels.extent(0); }
    std::size_t out_maps() const { return kernels.extent(4); }
    std::array<std::size_t, 3> extents() const {
        return {kernels.extent(1), kernels.extent(2), kernels.extent(3)};
    }
    /// Checks P, Q odd, R >= 1 and the bias count.
    void validate() const;

    friend bool operator==(const Conv3dLayer&, const Conv3dLayer&) = default;
};

/// Transposed convolution. `kernels` keeps the layout of the convolution it
/// transposes: (out_maps, P, Q, R, in_maps), so feeding the same tensor to a
/// Conv3dLayer gives the adjoint map. `biases` holds out_maps values.
template <typename T>
struct Deconv3dLayer {
    BasicTensor<T> kernels;
    std::vector<T> biases;
    Activation activation = Activation::identity;

    std::size_t in_maps() const { return kernels.extent(4); }
    std::size_t out_maps() const { return kernels.extent(0); }
    void validate() const;

    friend bool operator==(const Deconv3dLayer&, const Deconv3dLayer&) = default;
};

template <typename T>
struct ConvGrads {
    BasicTensor<T> grad_input;
    BasicTensor<T> grad_kernels;
    std::vector<T> grad_biases;
};

Shape conv3d_output_shape(const Shape& input, std::size_t out_maps,
                          const std::array<std::size_t, 3>& extents, Padding padding);
Shape deconv3d_output_shape(const Shape& input, std::size_t out_maps,
                            const std::array<std::size_t, 3>& extents, Padding padding);

template <typename T>
BasicTensor<T> conv3d_forward(const BasicTensor<T>& input, const Conv3dLayer<T>& layer, Padding padding);

/// Gradients of conv3d_forward (activation included) given the cached forward output.
template <typename T>
ConvGrads<T> conv3d_backward(const BasicTensor<T>& input, const Conv3dLayer<T>& layer, Padding padding,
                             const BasicTensor<T>& output, const BasicTensor<T>& grad_out);

/// Same as above but recomputes the forward output.
template <typename T>
ConvGrads<T> conv3d_backward(const BasicTensor<T>& input, const Conv3dLayer<T>& layer, Padding padding,
                             const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> deconv3d(const BasicTensor<T>& input, const Deconv3dLayer<T>& layer, Padding padding);

template <typename T>
ConvGrads<T> deconv3d_backward(const BasicTensor<T>& input, const Deconv3dLayer<T>& layer, Padding padding,
                               const BasicTensor<T>& output, const BasicTensor<T>& grad_out);

struct PoolWindow {
    std::size_t rows = 2;
    std::size_t cols = 2;
};

template <typename T>
struct PoolRecord {
    BasicTensor<T> output;
    /// Flat index into the pooled input of each output cell's maximum.
    std::vector<std::size_t> argmax_indices;
    Shape input_shape;
    PoolWindow window;
};

/// Max pooling over the two spatial axes of a (row, col, z, channel) tensor.
/// Odd extents are padded with -inf; ties go to the lowest flat index.
template <typename T>
PoolRecord<T> maxpool3d(const BasicTensor<T>& input, PoolWindow window = {});

/// Places each value at its recorded argmax location; zeros elsewhere.
template <typename T>
BasicTensor<T> unpool3d(const PoolRecord<T>& record, const BasicTensor<T>& values);

/// Adjoint of unpool3d: gathers the gradient at each recorded location.
template <typename T>
BasicTensor<T> unpool3d_backward(const PoolRecord<T>& record, const BasicTensor<T>& grad_out);

/// Nearest-neighbour upsampling of a pooled tensor back to `target` extents.
template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& coarse, const Shape& target, PoolWindow window = {});

template <typename T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& grad_fine, const Shape& coarse,
                                         PoolWindow window = {});

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

template <typename T>
T apply_activation(Activation a, T x);
/// Derivative expressed through the activation's output value.
template <typename T>
T activation_derivative(Activation a, T y);

/// Max-shifted softmax. Throws ArgumentError on empty input.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);

template <typename T>
std::vector<T> log_softmax(std::span<const T> logits);

/// Cross-entropy of softmax(logits) against `target`; `grad` receives p - onehot.
template <typename T>
double softmax_cross_entropy(std::span<const T> logits, std::size_t target, std::span<T> grad);

/// Fully connected map out = act(W^T x + b), with W shaped (in, out).
template <typename T>
struct DenseLayer {
    BasicTensor<T> weights;
    std::vector<T> biases;
    Activation activation = Activation::identity;

    std::size_t in_units() const { return weights.extent(0); }
    std::size_t out_units() const { return weights.extent(1); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

template <typename T>
std::vector<T> dense_forward(std::span<const T> input, const DenseLayer<T>& layer);

template <typename T>
struct DenseGrads {
    std::vector<T> grad_input;
    BasicTensor<T> grad_weights;
    std::vector<T> grad_biases;
};

template <typename T>
DenseGrads<T> dense_backward(std::span<const T> input, const DenseLayer<T>& layer, std::span<const T> output,
                             std::span<const T> grad_out);

/// w <- w - learning_rate * g, elementwise.
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, double learning_rate);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(std::span<T> values, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

} // namespace hsi
