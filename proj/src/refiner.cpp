#include "hsiseg/refiner.hpp"

#include <cmath>
#include <random>

#include "binio.hpp"

namespace hsi {

std::string to_string(RefinerPlacement p) {
    switch (p) {
    case RefinerPlacement::none: return "none";
    case RefinerPlacement::unary: return "unary";
    case RefinerPlacement::pairwise: return "pairwise";
    }
    return "none";
}

RefinerPlacement refiner_placement_from_string(const std::string& s) {
    if (s == "none") return RefinerPlacement::none;
    if (s == "unary") return RefinerPlacement::unary;
    if (s == "pairwise") return RefinerPlacement::pairwise;
    throw ConfigError("unknown refiner placement '" + s + "' (expected none, unary or pairwise)");
}

RefinerSpec build_refiner(const NetworkSpec& net) {
    net.validate();
    RefinerSpec spec;
    spec.channels = net.num_outputs();
    const LayerSpec* last_conv = nullptr;
    const LayerSpec* first_conv = nullptr;
    std::vector<RefinerStage> forward_order;
    for (const auto& l : net.layers) {
        if (l.kind == LayerKind::conv3d) {
            last_conv = &l;
            if (!first_conv) first_conv = &l;
        }
        if (l.kind == LayerKind::maxpool) {
            if (!last_conv) throw ConfigError("refiner: pooling layer before any conv3d layer");
            forward_order.push_back({last_conv->extents, last_conv->count});
        }
        if (l.kind == LayerKind::fully_connected) throw ConfigError("refiner: paired net must be fully convolutional");
    }
    spec.stages.assign(forward_order.rbegin(), forward_order.rend());
    if (!spec.stages.empty()) spec.final_extents = first_conv->extents;
    return spec;
}

template <typename T>
void RefinerParams<T>::for_each_array(const std::function<void(std::span<T>)>& fn) {
    if (stages.empty()) return;
    for (auto& s : stages) {
        fn(s.kernels.data());
        fn(std::span<T>(s.biases));
    }
    fn(final.kernels.data());
    fn(std::span<T>(final.biases));
}

template <typename T>
void RefinerParams<T>::for_each_array(const std::function<void(std::span<const T>)>& fn) const {
    if (stages.empty()) return;
    for (const auto& s : stages) {
        fn(s.kernels.data());
        fn(std::span<const T>(s.biases));
    }
    fn(final.kernels.data());
    fn(std::span<const T>(final.biases));
}

template <typename T>
std::size_t RefinerParams<T>::parameter_count() const {
    std::size_t n = 0;
    for_each_array(std::function<void(std::span<const T>)>([&](std::span<const T> s) { n += s.size(); }));
    return n;
}

template <typename T>
RefinerParams<T> RefinerParams<T>::zeros_like() const {
    RefinerParams z = *this;
    z.for_each_array(std::function<void(std::span<T>)>([](std::span<T> s) { std::fill(s.begin(), s.end(), T{0}); }));
    return z;
}

namespace {

template <typename U, typename T>
Deconv3dLayer<U> cast_layer(const Deconv3dLayer<T>& l) {
    Deconv3dLayer<U> out;
    out.kernels = l.kernels.template cast<U>();
    out.biases.assign(l.biases.begin(), l.biases.end());
    out.activation = l.activation;
    return out;
}

template <typename T>
Deconv3dLayer<T> bilinear_layer(std::size_t out, std::size_t in, const std::array<std::size_t, 3>& e, Activation act,
                                std::mt19937_64& rng) {
    Deconv3dLayer<T> l;
    l.kernels = BasicTensor<T>(Shape{out, e[0], e[1], e[2], in});
    l.biases.assign(out, T{0});
    l.activation = act;
    std::vector<T> mix(out * in);
    glorot_uniform<T>(mix, in, out, rng);
    const std::size_t cp = e[0] / 2, cq = e[1] / 2, cr = e[2] / 2;
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t p = 0; p < e[0]; ++p)
            for (std::size_t q = 0; q < e[1]; ++q) {
                const double w = std::pow(0.5, double(p > cp ? p - cp : cp - p)) *
                                 std::pow(0.5, double(q > cq ? q - cq : cq - q));
                for (std::size_t i = 0; i < in; ++i) {
                    l.kernels[(((o * e[0] + p) * e[1] + q) * e[2] + cr) * in + i] = T(w * double(mix[o * in + i]));
                }
            }
    return l;
}

void check_records(std::size_t records, std::size_t stages) {
    if (records != stages) {
        throw ArgumentError("refiner has " + std::to_string(stages) + " stages but received " +
                            std::to_string(records) + " pool records");
    }
}

} // namespace

template <typename T>
template <typename U>
RefinerParams<U> RefinerParams<T>::cast() const {
    RefinerParams<U> out;
    if (stages.empty()) return out;
    for (const auto& s : stages) out.stages.push_back(cast_layer<U>(s));
    out.final = cast_layer<U>(final);
    return out;
}

template <typename T>
RefinerParams<T> init_refiner(const RefinerSpec& spec, std::uint64_t seed) {
    RefinerParams<T> params;
    if (spec.identity()) return params;
    std::mt19937_64 rng(seed);
    std::size_t cur = spec.channels;
    for (const auto& s : spec.stages) {
        params.stages.push_back(bilinear_layer<T>(s.channels, cur, s.extents, Activation::relu, rng));
        cur = s.channels;
    }
    params.final = bilinear_layer<T>(spec.channels, cur, spec.final_extents, Activation::identity, rng);
    return params;
}

template <typename T>
RefineTrace<T> refine(const BasicTensor<T>& logits, const std::vector<const PoolRecord<T>*>& records,
                      const RefinerSpec& spec, const RefinerParams<T>& params) {
    check_records(records.size(), spec.stages.size());
    if (params.stages.size() != spec.stages.size()) throw ShapeError("refiner params do not match the refiner spec");
    RefineTrace<T> tr;
    BasicTensor<T> x = logits;
    for (std::size_t i = 0; i < spec.stages.size(); ++i) {
        const PoolRecord<T>& rec = *records[records.size() - 1 - i];
        tr.inputs.push_back(x);
        BasicTensor<T> h = deconv3d(x, params.stages[i], Padding::same);
        require_same_shape(rec.output.shape(), h.shape(), "refiner stage " + std::to_string(i + 1));
        x = unpool3d(rec, h);
        tr.hidden.push_back(std::move(h));
    }
    if (spec.identity()) {
        tr.final_input = logits;
        tr.output = logits;
        return tr;
    }
    tr.final_input = x;
    tr.output = deconv3d(x, params.final, Padding::same);
    return tr;
}

template <typename T>
RefinerGrads<T> refine_backward(const std::vector<const PoolRecord<T>*>& records, const RefinerSpec& spec,
                                const RefinerParams<T>& params, const RefineTrace<T>& trace,
                                const BasicTensor<T>& grad_output) {
    check_records(records.size(), spec.stages.size());
    require_same_shape(trace.output.shape(), grad_output.shape(), "refine_backward grad_output");
    RefinerGrads<T> g;
    g.params = params.zeros_like();
    if (spec.identity()) {
        g.input = grad_output;
        return g;
    }
    ConvGrads<T> fg = deconv3d_backward(trace.final_input, params.final, Padding::same, trace.output, grad_output);
    g.params.final.kernels = std::move(fg.grad_kernels);
    g.params.final.biases = std::move(fg.grad_biases);
    BasicTensor<T> grad = std::move(fg.grad_input);
    for (std::size_t i = spec.stages.size(); i-- > 0;) {
        const PoolRecord<T>& rec = *records[records.size() - 1 - i];
        const BasicTensor<T> gh = unpool3d_backward(rec, grad);
        ConvGrads<T> sg = deconv3d_backward(trace.inputs[i], params.stages[i], Padding::same, trace.hidden[i], gh);
        g.params.stages[i].kernels = std::move(sg.grad_kernels);
        g.params.stages[i].biases = std::move(sg.grad_biases);
        grad = std::move(sg.grad_input);
    }
    g.input = std::move(grad);
    return g;
}

template <typename T>
PathOutput<T> path_forward(const NetworkSpec& spec, const BasicNetworkParams<T>& params,
                           const RefinerSpec* refiner_spec, const RefinerParams<T>* refiner,
                           const BasicTensor<T>& input) {
    PathOutput<T> out;
    out.net = forward(spec, params, input);
    const auto records = out.net.pool_records();
    if (refiner_spec && refiner) {
        out.refined = refine(out.net.logits(), records, *refiner_spec, *refiner);
        out.fine = out.refined->output;
        return out;
    }
    BasicTensor<T> x = out.net.logits();
    for (std::size_t i = records.size(); i-- > 0;) {
        Shape target = records[i]->input_shape;
        target[3] = x.extent(3);
        x = upsample_nearest(x, target, records[i]->window);
    }
    out.fine = std::move(x);
    return out;
}

template <typename T>
PathGrads<T> path_backward(const NetworkSpec& spec, const BasicNetworkParams<T>& params,
                           const RefinerSpec* refiner_spec, const RefinerParams<T>* refiner,
                           const PathOutput<T>& out, const BasicTensor<T>& grad_fine, bool want_input_grad) {
    require_same_shape(out.fine.shape(), grad_fine.shape(), "path_backward grad");
    const auto records = out.net.pool_records();
    PathGrads<T> g;
    BasicTensor<T> grad_logits;
    if (refiner_spec && refiner) {
        RefinerGrads<T> rg = refine_backward(records, *refiner_spec, *refiner, *out.refined, grad_fine);
        g.refiner = std::move(rg.params);
        grad_logits = std::move(rg.input);
    } else {
        // Walk the upsampling chain back down, finest level first.
        std::vector<Shape> shapes;
        Shape s = out.net.logits().shape();
        shapes.push_back(s);
        for (std::size_t i = records.size(); i-- > 0;) {
            s = records[i]->input_shape;
            s[3] = out.net.logits().extent(3);
            shapes.push_back(s);
        }
        BasicTensor<T> x = grad_fine;
        for (std::size_t k = 0; k < records.size(); ++k) {
            x = upsample_nearest_backward(x, shapes[shapes.size() - 2 - k], records[k]->window);
        }
        grad_logits = std::move(x);
    }
    NetworkGrads<T> ng = backward(spec, params, out.net, grad_logits, want_input_grad);
    g.net = std::move(ng.params);
    g.input = std::move(ng.input);
    return g;
}

std::string refiner_bytes(const RefinerParams<float>& params) {
    using namespace detail;
    std::vector<std::span<const float>> arrays;
    params.for_each_array(
        std::function<void(std::span<const float>)>([&](std::span<const float> a) { arrays.push_back(a); }));
    std::string out = "HRFN";
    put_le<std::uint32_t>(out, std::uint32_t(arrays.size()));
    for (const auto& a : arrays) {
        put_le<std::uint64_t>(out, a.size());
        for (float v : a) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

void write_refiner(const RefinerParams<float>& params, const std::filesystem::path& path) {
    detail::dump(path, refiner_bytes(params));
}

RefinerParams<float> read_refiner(const RefinerSpec& spec, const std::filesystem::path& path) {
    using namespace detail;
    const std::string bytes = slurp(path);
    check_magic(bytes, "HRFN", path);
    need(bytes, 8, path, "array count");
    RefinerParams<float> params = init_refiner<float>(spec, 0);
    std::vector<std::span<float>> arrays;
    params.for_each_array(std::function<void(std::span<float>)>([&](std::span<float> a) { arrays.push_back(a); }));
    if (get_le<std::uint32_t>(bytes.data() + 4) != arrays.size()) {
        throw CorruptionError("'" + path.string() + "' holds a different number of refiner arrays than the spec");
    }
    std::size_t pos = 8;
    for (auto& a : arrays) {
        need(bytes, pos + 8, path, "array length");
        if (get_le<std::uint64_t>(bytes.data() + pos) != a.size()) {
            throw CorruptionError("'" + path.string() + "' refiner array length does not match the spec");
        }
        pos += 8;
        need(bytes, pos + 4 * a.size(), path, "array values");
        for (auto& v : a) {
            v = std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + pos));
            pos += 4;
        }
    }
    if (pos != bytes.size()) throw CorruptionError("'" + path.string() + "' has trailing bytes");
    return params;
}

#define HSI_INSTANTIATE_REFINER(T)                                                                                   \
    template struct RefinerParams<T>;                                                                                \
    template RefinerParams<T> init_refiner<T>(const RefinerSpec&, std::uint64_t);                                    \
    template RefineTrace<T> refine<T>(const BasicTensor<T>&, const std::vector<const PoolRecord<T>*>&,               \
                                      const RefinerSpec&, const RefinerParams<T>&);                                  \
    template RefinerGrads<T> refine_backward<T>(const std::vector<const PoolRecord<T>*>&, const RefinerSpec&,        \
                                                const RefinerParams<T>&, const RefineTrace<T>&,                      \
                                                const BasicTensor<T>&);                                              \
    template PathOutput<T> path_forward<T>(const NetworkSpec&, const BasicNetworkParams<T>&, const RefinerSpec*,     \
                                           const RefinerParams<T>*, const BasicTensor<T>&);                          \
    template PathGrads<T> path_backward<T>(const NetworkSpec&, const BasicNetworkParams<T>&, const RefinerSpec*,     \
                                           const RefinerParams<T>*, const PathOutput<T>&, const BasicTensor<T>&,     \
                                           bool);

HSI_INSTANTIATE_REFINER(float)
HSI_INSTANTIATE_REFINER(double)

template RefinerParams<double> RefinerParams<float>::cast<double>() const;
template RefinerParams<float> RefinerParams<double>::cast<float>() const;

} // namespace hsi
