#include "hsiseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hsi {

std::string to_string(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    throw ArgumentError("unknown activation '" + s + "'");
}

std::string to_string(Padding p) { return p == Padding::valid ? "valid" : "same"; }

Padding padding_from_string(const std::string& s) {
    if (s == "valid") return Padding::valid;
    if (s == "same") return Padding::same;
    throw ArgumentError("unknown padding '" + s + "'");
}

template <typename T>
T apply_activation(Activation a, T x) {
    switch (a) {
    case Activation::relu: return x > T{0} ? x : T{0};
    case Activation::sigmoid: return T(1) / (T(1) + std::exp(-x));
    case Activation::identity: break;
    }
    return x;
}

template <typename T>
T activation_derivative(Activation a, T y) {
    switch (a) {
    case Activation::relu: return y > T{0} ? T{1} : T{0};
    case Activation::sigmoid: return y * (T{1} - y);
    case Activation::identity: break;
    }
    return T{1};
}

namespace {

void require_rank4(const Shape& s, const std::string& what) {
    if (s.size() != 4) {
        throw ShapeError(what + ": expected a (row, col, z, channel) tensor, got " + shape_to_string(s));
    }
}

// Geometry of a stride-1 correlation between a "wide" grid (conv input / deconv
// output) and a "narrow" grid (conv output / deconv input).
struct Geometry {
    std::size_t wide[3];
    std::size_t narrow[3];
    std::size_t ext[3];
    std::ptrdiff_t pad[3];

    // Calls fn(narrow_voxel, tap, wide_voxel) for every in-bounds pairing.
    template <typename Fn>
    void for_each_tap(Fn&& fn) const {
        for (std::size_t x = 0; x < narrow[0]; ++x)
            for (std::size_t y = 0; y < narrow[1]; ++y)
                for (std::size_t z = 0; z < narrow[2]; ++z) {
                    const std::size_t n = (x * narrow[1] + y) * narrow[2] + z;
                    for (std::size_t p = 0; p < ext[0]; ++p) {
                        const std::ptrdiff_t ix = std::ptrdiff_t(x + p) - pad[0];
                        if (ix < 0 || ix >= std::ptrdiff_t(wide[0])) continue;
                        for (std::size_t q = 0; q < ext[1]; ++q) {
                            const std::ptrdiff_t iy = std::ptrdiff_t(y + q) - pad[1];
                            if (iy < 0 || iy >= std::ptrdiff_t(wide[1])) continue;
                            for (std::size_t r = 0; r < ext[2]; ++r) {
                                const std::ptrdiff_t iz = std::ptrdiff_t(z + r) - pad[2];
                                if (iz < 0 || iz >= std::ptrdiff_t(wide[2])) continue;
                                const std::size_t tap = (p * ext[1] + q) * ext[2] + r;
                                const std::size_t w = (std::size_t(ix) * wide[1] + std::size_t(iy)) * wide[2] +
                                                      std::size_t(iz);
                                fn(n, tap, w);
                            }
                        }
                    }
                }
    }
};

Geometry make_geometry(const Shape& wide, const Shape& narrow, const std::array<std::size_t, 3>& ext,
                       Padding padding) {
    Geometry g{};
    for (int a = 0; a < 3; ++a) {
        g.wide[a] = wide[a];
        g.narrow[a] = narrow[a];
        g.ext[a] = ext[a];
        g.pad[a] = padding == Padding::same ? std::ptrdiff_t((ext[a] - 1) / 2) : 0;
    }
    return g;
}

template <typename T>
void check_kernel(const BasicTensor<T>& kernels, const std::string& what) {
    if (kernels.rank() != 5) {
        throw ShapeError(what + ": kernels must have shape (m_in, P, Q, R, m_out), got " +
                         shape_to_string(kernels.shape()));
    }
    if (kernels.extent(1) % 2 == 0 || kernels.extent(2) % 2 == 0 || kernels.extent(3) < 1 ||
        kernels.extent(0) < 1 || kernels.extent(4) < 1) {
        throw ShapeError(what + ": kernel extents must have odd P, Q and R >= 1, got " +
                         shape_to_string(kernels.shape()));
    }
}

} // namespace

template <typename T>
void Conv3dLayer<T>::validate() const {
    check_kernel(kernels, "conv3d");
    if (biases.size() != out_maps()) {
        throw ShapeError("conv3d: bias count " + std::to_string(biases.size()) + " does not match " +
                         std::to_string(out_maps()) + " output maps");
    }
}

template <typename T>
void Deconv3dLayer<T>::validate() const {
    check_kernel(kernels, "deconv3d");
    if (biases.size() != out_maps()) {
        throw ShapeError("deconv3d: bias count " + std::to_string(biases.size()) + " does not match " +
                         std::to_string(out_maps()) + " output maps");
    }
}

Shape conv3d_output_shape(const Shape& input, std::size_t out_maps, const std::array<std::size_t, 3>& extents,
                          Padding padding) {
    require_rank4(input, "conv3d");
    Shape out(4);
    for (int a = 0; a < 3; ++a) {
        if (padding == Padding::valid) {
            if (input[a] < extents[a]) {
                throw ShapeError("conv3d: input " + shape_to_string(input) + " smaller than kernel extents (" +
                                 std::to_string(extents[0]) + "x" + std::to_string(extents[1]) + "x" +
                                 std::to_string(extents[2]) + ") under valid padding");
            }
            out[a] = input[a] - extents[a] + 1;
        } else {
            out[a] = input[a];
        }
    }
    out[3] = out_maps;
    return out;
}

Shape deconv3d_output_shape(const Shape& input, std::size_t out_maps, const std::array<std::size_t, 3>& extents,
                            Padding padding) {
    require_rank4(input, "deconv3d");
    Shape out(4);
    for (int a = 0; a < 3; ++a) out[a] = padding == Padding::valid ? input[a] + extents[a] - 1 : input[a];
    out[3] = out_maps;
    return out;
}

template <typename T>
BasicTensor<T> conv3d_forward(const BasicTensor<T>& input, const Conv3dLayer<T>& layer, Padding padding) {
    layer.validate();
    require_rank4(input.shape(), "conv3d");
    const std::size_t m_in = layer.in_maps();
    const std::size_t m_out = layer.out_maps();
    if (input.extent(3) != m_in) {
        throw ShapeError("conv3d: input " + shape_to_string(input.shape()) + " has " +
                         std::to_string(input.extent(3)) + " channels but kernels " +
                         shape_to_string(layer.kernels.shape()) + " expect " + std::to_string(m_in));
    }
    const auto ext = layer.extents();
    const Shape out_shape = conv3d_output_shape(input.shape(), m_out, ext, padding);
    const Geometry g = make_geometry(input.shape(), out_shape, ext, padding);
    const std::size_t taps = ext[0] * ext[1] * ext[2];

    std::vector<double> acc(shape_volume(out_shape), 0.0);
    const T* in = input.data().data();
    const T* k = layer.kernels.data().data();
    g.for_each_tap([&](std::size_t n, std::size_t tap, std::size_t w) {
        double* a = &acc[n * m_out];
        const T* iv = in + w * m_in;
        for (std::size_t i = 0; i < m_in; ++i) {
            const double v = iv[i];
            const T* kv = k + (i * taps + tap) * m_out;
            for (std::size_t j = 0; j < m_out; ++j) a[j] += double(kv[j]) * v;
        }
    });

    BasicTensor<T> out(out_shape);
    for (std::size_t n = 0; n < acc.size(); ++n) {
        const std::size_t j = n % m_out;
        out[n] = apply_activation(layer.activation, T(acc[n] + double(layer.biases[j])));
    }
    return out;
}

template <typename T>
ConvGrads<T> conv3d_backward(const BasicTensor<T>& input, const Conv3dLayer<T>& layer, Padding padding,
                             const BasicTensor<T>& output, const BasicTensor<T>& grad_out) {
    layer.validate();
    const std::size_t m_in = layer.in_maps();
    const std::size_t m_out = layer.out_maps();
    const auto ext = layer.extents();
    const Shape out_shape = conv3d_output_shape(input.shape(), m_out, ext, padding);
    require_same_shape(out_shape, grad_out.shape(), "conv3d_backward grad_out");
    require_same_shape(out_shape, output.shape(), "conv3d_backward output");
    const Geometry g = make_geometry(input.shape(), out_shape, ext, padding);
    const std::size_t taps = ext[0] * ext[1] * ext[2];

    std::vector<double> gpre(grad_out.size());
    std::vector<double> gb(m_out, 0.0);
    for (std::size_t n = 0; n < gpre.size(); ++n) {
        gpre[n] = double(grad_out[n]) * double(activation_derivative(layer.activation, output[n]));
        gb[n % m_out] += gpre[n];
    }

    std::vector<double> gk(layer.kernels.size(), 0.0);
    std::vector<double> gi(input.size(), 0.0);
    const T* in = input.data().data();
    const T* k = layer.kernels.data().data();
    g.for_each_tap([&](std::size_t n, std::size_t tap, std::size_t w) {
        const double* gp = &gpre[n * m_out];
        const T* iv = in + w * m_in;
        double* giv = &gi[w * m_in];
        for (std::size_t i = 0; i < m_in; ++i) {
            const double v = iv[i];
            const std::size_t base = (i * taps + tap) * m_out;
            double s = 0.0;
            for (std::size_t j = 0; j < m_out; ++j) {
                gk[base + j] += v * gp[j];
                s += double(k[base + j]) * gp[j];
            }
            giv[i] += s;
        }
    });

    ConvGrads<T> grads;
    grads.grad_input = BasicTensor<T>(input.shape(), std::vector<T>(gi.begin(), gi.end()));
    grads.grad_kernels = BasicTensor<T>(layer.kernels.shape(), std::vector<T>(gk.begin(), gk.end()));
    grads.grad_biases.assign(gb.begin(), gb.end());
    return grads;
}

template <typename T>
ConvGrads<T> conv3d_backward(const BasicTensor<T>& input, const Conv3dLayer<T>& layer, Padding padding,
                             const BasicTensor<T>& grad_out) {
    return conv3d_backward(input, layer, padding, conv3d_forward(input, layer, padding), grad_out);
}

template <typename T>
BasicTensor<T> deconv3d(const BasicTensor<T>& input, const Deconv3dLayer<T>& layer, Padding padding) {
    layer.validate();
    require_rank4(input.shape(), "deconv3d");
    const std::size_t m_in = layer.in_maps();
    const std::size_t m_out = layer.out_maps();
    if (input.extent(3) != m_in) {
        throw ShapeError("deconv3d: input " + shape_to_string(input.shape()) + " has " +
                         std::to_string(input.extent(3)) + " channels but kernels " +
                         shape_to_string(layer.kernels.shape()) + " expect " + std::to_string(m_in));
    }
    const std::array<std::size_t, 3> ext{layer.kernels.extent(1), layer.kernels.extent(2), layer.kernels.extent(3)};
    const Shape out_shape = deconv3d_output_shape(input.shape(), m_out, ext, padding);
    const Geometry g = make_geometry(out_shape, input.shape(), ext, padding);
    const std::size_t taps = ext[0] * ext[1] * ext[2];

    std::vector<double> acc(shape_volume(out_shape), 0.0);
    const T* in = input.data().data();
    const T* k = layer.kernels.data().data();
    g.for_each_tap([&](std::size_t n, std::size_t tap, std::size_t w) {
        const T* yv = in + n * m_in;
        double* a = &acc[w * m_out];
        for (std::size_t o = 0; o < m_out; ++o) {
            const T* kv = k + (o * taps + tap) * m_in;
            double s = 0.0;
            for (std::size_t j = 0; j < m_in; ++j) s += double(kv[j]) * double(yv[j]);
            a[o] += s;
        }
    });

    BasicTensor<T> out(out_shape);
    for (std::size_t n = 0; n < acc.size(); ++n) {
        out[n] = apply_activation(layer.activation, T(acc[n] + double(layer.biases[n % m_out])));
    }
    return out;
}

template <typename T>
ConvGrads<T> deconv3d_backward(const BasicTensor<T>& input, const Deconv3dLayer<T>& layer, Padding padding,
                               const BasicTensor<T>& output, const BasicTensor<T>& grad_out) {
    layer.validate();
    const std::size_t m_in = layer.in_maps();
    const std::size_t m_out = layer.out_maps();
    const std::array<std::size_t, 3> ext{layer.kernels.extent(1), layer.kernels.extent(2), layer.kernels.extent(3)};
    const Shape out_shape = deconv3d_output_shape(input.shape(), m_out, ext, padding);
    require_same_shape(out_shape, grad_out.shape(), "deconv3d_backward grad_out");
    require_same_shape(out_shape, output.shape(), "deconv3d_backward output");
    const Geometry g = make_geometry(out_shape, input.shape(), ext, padding);
    const std::size_t taps = ext[0] * ext[1] * ext[2];

    std::vector<double> gpre(grad_out.size());
    std::vector<double> gb(m_out, 0.0);
    for (std::size_t n = 0; n < gpre.size(); ++n) {
        gpre[n] = double(grad_out[n]) * double(activation_derivative(layer.activation, output[n]));
        gb[n % m_out] += gpre[n];
    }

    std::vector<double> gk(layer.kernels.size(), 0.0);
    std::vector<double> gi(input.size(), 0.0);
    const T* in = input.data().data();
    const T* k = layer.kernels.data().data();
    g.for_each_tap([&](std::size_t n, std::size_t tap, std::size_t w) {
        const T* yv = in + n * m_in;
        double* giv = &gi[n * m_in];
        const double* gp = &gpre[w * m_out];
        for (std::size_t o = 0; o < m_out; ++o) {
            const std::size_t base = (o * taps + tap) * m_in;
            const double go = gp[o];
            for (std::size_t j = 0; j < m_in; ++j) {
                gk[base + j] += go * double(yv[j]);
                giv[j] += double(k[base + j]) * go;
            }
        }
    });

    ConvGrads<T> grads;
    grads.grad_input = BasicTensor<T>(input.shape(), std::vector<T>(gi.begin(), gi.end()));
    grads.grad_kernels = BasicTensor<T>(layer.kernels.shape(), std::vector<T>(gk.begin(), gk.end()));
    grads.grad_biases.assign(gb.begin(), gb.end());
    return grads;
}

template <typename T>
PoolRecord<T> maxpool3d(const BasicTensor<T>& input, PoolWindow window) {
    require_rank4(input.shape(), "maxpool3d");
    if (window.rows == 0 || window.cols == 0) throw ArgumentError("maxpool3d: empty pooling window");
    const std::size_t R = input.extent(0), C = input.extent(1), Z = input.extent(2), M = input.extent(3);
    const std::size_t oR = (R + window.rows - 1) / window.rows;
    const std::size_t oC = (C + window.cols - 1) / window.cols;

    PoolRecord<T> rec;
    rec.input_shape = input.shape();
    rec.window = window;
    rec.output = BasicTensor<T>(Shape{oR, oC, Z, M});
    rec.argmax_indices.assign(rec.output.size(), 0);
    for (std::size_t r = 0; r < oR; ++r)
        for (std::size_t c = 0; c < oC; ++c)
            for (std::size_t z = 0; z < Z; ++z)
                for (std::size_t m = 0; m < M; ++m) {
                    // Cells beyond the input act as -inf and never win.
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_idx = std::numeric_limits<std::size_t>::max();
                    for (std::size_t dr = 0; dr < window.rows; ++dr) {
                        const std::size_t ir = r * window.rows + dr;
                        if (ir >= R) break;
                        for (std::size_t dc = 0; dc < window.cols; ++dc) {
                            const std::size_t ic = c * window.cols + dc;
                            if (ic >= C) break;
                            const std::size_t idx = ((ir * C + ic) * Z + z) * M + m;
                            if (best_idx == std::numeric_limits<std::size_t>::max() || input[idx] > best) {
                                best = input[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    const std::size_t o = ((r * oC + c) * Z + z) * M + m;
                    rec.output[o] = best;
                    rec.argmax_indices[o] = best_idx;
                }
    return rec;
}

template <typename T>
BasicTensor<T> unpool3d(const PoolRecord<T>& record, const BasicTensor<T>& values) {
    require_same_shape(record.output.shape(), values.shape(), "unpool3d");
    if (record.argmax_indices.size() != values.size()) {
        throw CorruptionError("unpool3d: pool record holds " + std::to_string(record.argmax_indices.size()) +
                              " indices for " + std::to_string(values.size()) + " cells");
    }
    BasicTensor<T> out(record.input_shape);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t idx = record.argmax_indices[i];
        if (idx >= out.size()) {
            throw CorruptionError("unpool3d: argmax index " + std::to_string(idx) + " outside input of " +
                                  std::to_string(out.size()) + " values");
        }
        out[idx] += values[i];
    }
    return out;
}

template <typename T>
BasicTensor<T> unpool3d_backward(const PoolRecord<T>& record, const BasicTensor<T>& grad_out) {
    require_same_shape(record.input_shape, grad_out.shape(), "unpool3d_backward");
    BasicTensor<T> g(record.output.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t idx = record.argmax_indices.at(i);
        if (idx >= grad_out.size()) throw CorruptionError("unpool3d_backward: argmax index out of range");
        g[i] = grad_out[idx];
    }
    return g;
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& coarse, const Shape& target, PoolWindow window) {
    require_rank4(coarse.shape(), "upsample_nearest");
    require_rank4(target, "upsample_nearest target");
    const std::size_t R = target[0], C = target[1], Z = target[2], M = target[3];
    if ((R + window.rows - 1) / window.rows != coarse.extent(0) ||
        (C + window.cols - 1) / window.cols != coarse.extent(1) || Z != coarse.extent(2) ||
        M != coarse.extent(3)) {
        throw ShapeError("upsample_nearest: coarse " + shape_to_string(coarse.shape()) +
                         " does not pool to target " + shape_to_string(target));
    }
    BasicTensor<T> out(target);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t z = 0; z < Z; ++z)
                for (std::size_t m = 0; m < M; ++m) out.at(r, c, z, m) = coarse.at(r / window.rows, c / window.cols, z, m);
    return out;
}

template <typename T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& grad_fine, const Shape& coarse, PoolWindow window) {
    require_rank4(grad_fine.shape(), "upsample_nearest_backward");
    const std::size_t R = grad_fine.extent(0), C = grad_fine.extent(1), Z = grad_fine.extent(2),
                      M = grad_fine.extent(3);
    std::vector<double> acc(shape_volume(coarse), 0.0);
    BasicTensor<T> g(coarse);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t z = 0; z < Z; ++z)
                for (std::size_t m = 0; m < M; ++m) {
                    const std::size_t o = (((r / window.rows) * coarse[1] + c / window.cols) * coarse[2] + z) * coarse[3] + m;
                    acc[o] += double(grad_fine.at(r, c, z, m));
                }
    for (std::size_t i = 0; i < acc.size(); ++i) g[i] = T(acc[i]);
    return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out = input;
    for (T& v : out.data()) v = v > T{0} ? v : T{0};
    return out;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) throw ArgumentError("softmax: empty logits");
    const double mx = double(*std::max_element(logits.begin(), logits.end()));
    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(double(logits[i]) - mx);
        sum += e[i];
    }
    std::vector<T> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = T(e[i] / sum);
    return out;
}

template <typename T>
std::vector<T> log_softmax(std::span<const T> logits) {
    if (logits.empty()) throw ArgumentError("log_softmax: empty logits");
    const double mx = double(*std::max_element(logits.begin(), logits.end()));
    double sum = 0.0;
    for (const T& v : logits) sum += std::exp(double(v) - mx);
    const double lse = mx + std::log(sum);
    std::vector<T> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = T(double(logits[i]) - lse);
    return out;
}

template <typename T>
double softmax_cross_entropy(std::span<const T> logits, std::size_t target, std::span<T> grad) {
    if (target >= logits.size()) throw ArgumentError("softmax_cross_entropy: target out of range");
    if (grad.size() != logits.size()) throw ShapeError("softmax_cross_entropy: gradient size mismatch");
    const double mx = double(*std::max_element(logits.begin(), logits.end()));
    double sum = 0.0;
    for (const T& v : logits) sum += std::exp(double(v) - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        grad[i] = T(std::exp(double(logits[i]) - lse) - (i == target ? 1.0 : 0.0));
    }
    return lse - double(logits[target]);
}

template <typename T>
std::vector<T> dense_forward(std::span<const T> input, const DenseLayer<T>& layer) {
    const std::size_t n_in = layer.in_units(), n_out = layer.out_units();
    if (input.size() != n_in) {
        throw ShapeError("dense: input of " + std::to_string(input.size()) + " values, weights " +
                         shape_to_string(layer.weights.shape()));
    }
    if (layer.biases.size() != n_out) throw ShapeError("dense: bias count does not match output units");
    std::vector<double> acc(n_out, 0.0);
    const T* w = layer.weights.data().data();
    for (std::size_t i = 0; i < n_in; ++i) {
        const double v = input[i];
        if (v == 0.0) continue;
        const T* wr = w + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) acc[j] += double(wr[j]) * v;
    }
    std::vector<T> out(n_out);
    for (std::size_t j = 0; j < n_out; ++j) out[j] = apply_activation(layer.activation, T(acc[j] + double(layer.biases[j])));
    return out;
}

template <typename T>
DenseGrads<T> dense_backward(std::span<const T> input, const DenseLayer<T>& layer, std::span<const T> output,
                             std::span<const T> grad_out) {
    const std::size_t n_in = layer.in_units(), n_out = layer.out_units();
    if (input.size() != n_in || output.size() != n_out || grad_out.size() != n_out) {
        throw ShapeError("dense_backward: size mismatch against weights " + shape_to_string(layer.weights.shape()));
    }
    std::vector<double> gp(n_out);
    for (std::size_t j = 0; j < n_out; ++j) gp[j] = double(grad_out[j]) * double(activation_derivative(layer.activation, output[j]));
    DenseGrads<T> g;
    g.grad_input.assign(n_in, T{0});
    g.grad_weights = BasicTensor<T>(layer.weights.shape());
    g.grad_biases.assign(gp.begin(), gp.end());
    const T* w = layer.weights.data().data();
    for (std::size_t i = 0; i < n_in; ++i) {
        const double v = input[i];
        const T* wr = w + i * n_out;
        T* gw = &g.grad_weights[i * n_out];
        double s = 0.0;
        for (std::size_t j = 0; j < n_out; ++j) {
            gw[j] = T(v * gp[j]);
            s += double(wr[j]) * gp[j];
        }
        g.grad_input[i] = T(s);
    }
    return g;
}

template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, double learning_rate) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i] = T(double(params[i]) - learning_rate * double(grads[i]));
}

template <typename T>
void glorot_uniform(std::span<T> values, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (T& v : values) v = T(dist(rng));
}

#define HSI_INSTANTIATE_LAYERS(T)                                                                                  \
    template T apply_activation<T>(Activation, T);                                                                 \
    template T activation_derivative<T>(Activation, T);                                                            \
    template struct Conv3dLayer<T>;                                                                                \
    template struct Deconv3dLayer<T>;                                                                              \
    template BasicTensor<T> conv3d_forward<T>(const BasicTensor<T>&, const Conv3dLayer<T>&, Padding);             \
    template ConvGrads<T> conv3d_backward<T>(const BasicTensor<T>&, const Conv3dLayer<T>&, Padding,               \
                                             const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template ConvGrads<T> conv3d_backward<T>(const BasicTensor<T>&, const Conv3dLayer<T>&, Padding,               \
                                             const BasicTensor<T>&);                                               \
    template BasicTensor<T> deconv3d<T>(const BasicTensor<T>&, const Deconv3dLayer<T>&, Padding);                 \
    template ConvGrads<T> deconv3d_backward<T>(const BasicTensor<T>&, const Deconv3dLayer<T>&, Padding,           \
                                               const BasicTensor<T>&, const BasicTensor<T>&);                      \
    template PoolRecord<T> maxpool3d<T>(const BasicTensor<T>&, PoolWindow);                                       \
    template BasicTensor<T> unpool3d<T>(const PoolRecord<T>&, const BasicTensor<T>&);                             \
    template BasicTensor<T> unpool3d_backward<T>(const PoolRecord<T>&, const BasicTensor<T>&);                    \
    template BasicTensor<T> upsample_nearest<T>(const BasicTensor<T>&, const Shape&, PoolWindow);                 \
    template BasicTensor<T> upsample_nearest_backward<T>(const BasicTensor<T>&, const Shape&, PoolWindow);        \
    template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                                        \
    template std::vector<T> softmax<T>(std::span<const T>);                                                        \
    template std::vector<T> log_softmax<T>(std::span<const T>);                                                    \
    template double softmax_cross_entropy<T>(std::span<const T>, std::size_t, std::span<T>);                       \
    template std::vector<T> dense_forward<T>(std::span<const T>, const DenseLayer<T>&);                           \
    template DenseGrads<T> dense_backward<T>(std::span<const T>, const DenseLayer<T>&, std::span<const T>,        \
                                             std::span<const T>);                                                  \
    template void sgd_step<T>(std::span<T>, std::span<const T>, double);                                           \
    template void glorot_uniform<T>(std::span<T>, std::size_t, std::size_t, std::mt19937_64&);

HSI_INSTANTIATE_LAYERS(float)
HSI_INSTANTIATE_LAYERS(double)

#undef HSI_INSTANTIATE_LAYERS

} // namespace hsi
