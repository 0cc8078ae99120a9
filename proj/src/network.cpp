#include "hsiseg/network.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "binio.hpp"

namespace hsi {

namespace {

using namespace detail;

const char* kind_name(LayerKind k) {
    switch (k) {
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::softmax: return "softmax";
    }
    return "?";
}

std::size_t parse_count(const std::string& tok, const std::string& line) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != tok.size() || tok.empty() || tok[0] == '-') {
        throw ConfigError("network spec: bad count '" + tok + "' in line '" + line + "'");
    }
    return std::size_t(v);
}

std::array<std::size_t, 3> parse_extents(const std::string& tok, const std::string& line) {
    std::array<std::size_t, 3> e{};
    std::stringstream ss(tok);
    std::string part;
    std::size_t i = 0;
    while (std::getline(ss, part, 'x')) {
        if (i == 3) throw ConfigError("network spec: bad extents '" + tok + "' in line '" + line + "'");
        e[i++] = parse_count(part, line);
    }
    if (i != 3) throw ConfigError("network spec: bad extents '" + tok + "' in line '" + line + "'");
    return e;
}

} // namespace

void NetworkSpec::validate() const {
    if (layers.empty()) throw ConfigError("network spec has no layers");
    if (layers.back().kind != LayerKind::softmax) throw ConfigError("network spec must end with a softmax layer");
    if (conv_count() == 0) throw ConfigError("network spec needs at least one conv3d layer");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (l.kind == LayerKind::softmax && i + 1 != layers.size()) {
            throw ConfigError("network spec: softmax allowed only as the last layer");
        }
        if (l.kind != LayerKind::maxpool && l.count == 0) {
            throw ConfigError(std::string("network spec: ") + kind_name(l.kind) + " layer " + std::to_string(i + 1) +
                              " has zero width");
        }
        if (l.kind == LayerKind::conv3d &&
            (l.extents[0] % 2 == 0 || l.extents[1] % 2 == 0 || l.extents[2] == 0)) {
            throw ConfigError("network spec: conv3d layer " + std::to_string(i + 1) +
                              " needs odd P, Q and R >= 1");
        }
    }
}

std::size_t NetworkSpec::pool_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.kind == LayerKind::maxpool;
    return n;
}

std::size_t NetworkSpec::conv_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.kind == LayerKind::conv3d;
    return n;
}

std::vector<std::size_t> NetworkSpec::pooled_conv_layers() const {
    std::vector<std::size_t> out;
    std::size_t conv = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::conv3d) ++conv;
        if (l.kind == LayerKind::maxpool && conv > 0) out.push_back(conv);
    }
    return out;
}

std::string NetworkSpec::serialize() const {
    std::ostringstream os;
    os << "padding " << to_string(padding) << '\n';
    for (const auto& l : layers) {
        os << kind_name(l.kind);
        switch (l.kind) {
        case LayerKind::conv3d:
            os << ' ' << l.count << ' ' << l.extents[0] << 'x' << l.extents[1] << 'x' << l.extents[2] << ' '
               << to_string(l.activation);
            break;
        case LayerKind::maxpool: os << " 2x2"; break;
        case LayerKind::fully_connected: os << ' ' << l.count << ' ' << to_string(l.activation); break;
        case LayerKind::softmax: os << ' ' << l.count; break;
        }
        os << '\n';
    }
    return os.str();
}

NetworkSpec NetworkSpec::parse(const std::string& text) {
    NetworkSpec spec;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty() || tok[0][0] == '#') continue;
        LayerSpec l;
        if (tok[0] == "padding" && tok.size() == 2) {
            try {
                spec.padding = padding_from_string(tok[1]);
            } catch (const ArgumentError& e) {
                throw ConfigError(std::string("network spec: ") + e.what());
            }
            continue;
        }
        try {
            if (tok[0] == "conv3d" && (tok.size() == 3 || tok.size() == 4)) {
                l.kind = LayerKind::conv3d;
                l.count = parse_count(tok[1], line);
                l.extents = parse_extents(tok[2], line);
                l.activation = tok.size() == 4 ? activation_from_string(tok[3]) : Activation::relu;
            } else if (tok[0] == "maxpool" && tok.size() <= 2) {
                if (tok.size() == 2 && tok[1] != "2x2") {
                    throw ConfigError("network spec: only 2x2 pooling is supported, got '" + tok[1] + "'");
                }
                l.kind = LayerKind::maxpool;
                l.activation = Activation::identity;
            } else if (tok[0] == "fully_connected" && (tok.size() == 2 || tok.size() == 3)) {
                l.kind = LayerKind::fully_connected;
                l.count = parse_count(tok[1], line);
                l.activation = tok.size() == 3 ? activation_from_string(tok[2]) : Activation::relu;
            } else if (tok[0] == "softmax" && tok.size() == 2) {
                l.kind = LayerKind::softmax;
                l.count = parse_count(tok[1], line);
                l.activation = Activation::identity;
            } else {
                throw ConfigError("network spec: cannot parse line '" + line + "'");
            }
        } catch (const ArgumentError& e) {
            throw ConfigError(std::string("network spec: ") + e.what());
        }
        spec.layers.push_back(l);
    }
    spec.validate();
    return spec;
}

std::vector<std::string> preset_names() {
    return {"indian-pines-cls", "pavia-cls", "griffith-cls", "synthetic-cls",
            "indian-pines-seg", "pavia-seg", "griffith-seg", "synthetic-seg"};
}

NetworkSpec build_network(const NetworkProfile& profile) {
    struct Layout {
        std::size_t convs;
        std::set<std::size_t> pools;
        bool classification;
    };
    static const std::map<std::string, Layout> layouts = {
        {"indian-pines-cls", {7, {1, 2, 5, 7}, true}},
        {"pavia-cls", {6, {1, 2, 5}, true}},
        {"griffith-cls", {6, {1, 2, 5}, true}},
        {"synthetic-cls", {6, {1, 2, 5}, true}},
        {"indian-pines-seg", {4, {1, 4}, false}},
        {"pavia-seg", {3, {1, 3}, false}},
        {"griffith-seg", {3, {1}, false}},
        {"synthetic-seg", {3, {1}, false}},
    };
    const auto it = layouts.find(profile.preset);
    if (it == layouts.end()) throw ConfigError("unknown network preset '" + profile.preset + "'");
    if (profile.num_outputs == 0) throw ConfigError("network preset needs a positive output width");
    if (profile.kernel_extent % 2 == 0) throw ConfigError("kernel_extent must be odd");

    const Layout& lay = it->second;
    NetworkSpec spec;
    for (std::size_t c = 1; c <= lay.convs; ++c) {
        LayerSpec conv;
        conv.kind = LayerKind::conv3d;
        conv.count = profile.kernel_count;
        conv.extents = {profile.kernel_extent, profile.kernel_extent, profile.kernel_extent};
        conv.activation = Activation::relu;
        spec.layers.push_back(conv);
        if (lay.pools.count(c)) spec.layers.push_back(LayerSpec{LayerKind::maxpool, 0, {1, 1, 1}, Activation::identity});
    }
    if (lay.classification) {
        spec.layers.push_back(LayerSpec{LayerKind::fully_connected, profile.fc_units, {1, 1, 1}, Activation::relu});
    }
    spec.layers.push_back(LayerSpec{LayerKind::softmax, profile.num_outputs, {1, 1, 1}, Activation::identity});
    spec.validate();
    return spec;
}

template <typename T>
void BasicNetworkParams<T>::for_each_array(const std::function<void(std::span<T>)>& fn) {
    for (auto& l : layers) {
        if (l.kind == LayerKind::conv3d || l.kind == LayerKind::softmax) {
            fn(l.conv.kernels.data());
            fn(std::span<T>(l.conv.biases));
        } else if (l.kind == LayerKind::fully_connected) {
            fn(l.dense.weights.data());
            fn(std::span<T>(l.dense.biases));
        }
    }
}

template <typename T>
void BasicNetworkParams<T>::for_each_array(const std::function<void(std::span<const T>)>& fn) const {
    for (const auto& l : layers) {
        if (l.kind == LayerKind::conv3d || l.kind == LayerKind::softmax) {
            fn(l.conv.kernels.data());
            fn(std::span<const T>(l.conv.biases));
        } else if (l.kind == LayerKind::fully_connected) {
            fn(l.dense.weights.data());
            fn(std::span<const T>(l.dense.biases));
        }
    }
}

template <typename T>
std::size_t BasicNetworkParams<T>::parameter_count() const {
    std::size_t n = 0;
    for_each_array(std::function<void(std::span<const T>)>([&](std::span<const T> s) { n += s.size(); }));
    return n;
}

template <typename T>
BasicNetworkParams<T> BasicNetworkParams<T>::zeros_like() const {
    BasicNetworkParams z = *this;
    z.for_each_array(std::function<void(std::span<T>)>([](std::span<T> s) { std::fill(s.begin(), s.end(), T{0}); }));
    return z;
}

template <typename T>
template <typename U>
BasicNetworkParams<U> BasicNetworkParams<T>::cast() const {
    BasicNetworkParams<U> out;
    out.input_shape = input_shape;
    for (const auto& l : layers) {
        LayerParams<U> c;
        c.kind = l.kind;
        c.conv.kernels = l.conv.kernels.template cast<U>();
        c.conv.biases.assign(l.conv.biases.begin(), l.conv.biases.end());
        c.conv.activation = l.conv.activation;
        c.dense.weights = l.dense.weights.template cast<U>();
        c.dense.biases.assign(l.dense.biases.begin(), l.dense.biases.end());
        c.dense.activation = l.dense.activation;
        out.layers.push_back(std::move(c));
    }
    return out;
}

template <typename T>
BasicNetworkParams<T> init_params(const NetworkSpec& spec, const Shape& input_shape, std::uint64_t seed) {
    spec.validate();
    if (input_shape.size() != 4) {
        throw ShapeError("network input must be a (row, col, z, channel) tensor, got " + shape_to_string(input_shape));
    }
    std::mt19937_64 rng(seed);
    BasicNetworkParams<T> params;
    params.input_shape = input_shape;
    Shape cur = input_shape;
    for (const LayerSpec& l : spec.layers) {
        LayerParams<T> p;
        p.kind = l.kind;
        switch (l.kind) {
        case LayerKind::conv3d:
        case LayerKind::softmax: {
            const auto ext = l.kind == LayerKind::conv3d ? l.extents : std::array<std::size_t, 3>{1, 1, 1};
            const std::size_t taps = ext[0] * ext[1] * ext[2];
            p.conv.kernels = BasicTensor<T>(Shape{cur[3], ext[0], ext[1], ext[2], l.count});
            p.conv.biases.assign(l.count, T{0});
            p.conv.activation = l.activation;
            glorot_uniform(p.conv.kernels.data(), cur[3] * taps, l.count * taps, rng);
            cur = conv3d_output_shape(cur, l.count, ext, l.kind == LayerKind::conv3d ? spec.padding : Padding::same);
            break;
        }
        case LayerKind::maxpool:
            cur = Shape{(cur[0] + 1) / 2, (cur[1] + 1) / 2, cur[2], cur[3]};
            break;
        case LayerKind::fully_connected: {
            const std::size_t in = shape_volume(cur);
            p.dense.weights = BasicTensor<T>(Shape{in, l.count});
            p.dense.biases.assign(l.count, T{0});
            p.dense.activation = l.activation;
            glorot_uniform(p.dense.weights.data(), in, l.count, rng);
            cur = Shape{1, 1, 1, l.count};
            break;
        }
        }
        params.layers.push_back(std::move(p));
    }
    return params;
}

template <typename T>
std::vector<const PoolRecord<T>*> ForwardTrace<T>::pool_records() const {
    std::vector<const PoolRecord<T>*> out;
    for (const auto& p : pools)
        if (p) out.push_back(&*p);
    return out;
}

namespace {

void check_congruent(const NetworkSpec& spec, std::size_t param_layers) {
    if (spec.layers.size() != param_layers) {
        throw ShapeError("network params have " + std::to_string(param_layers) + " layers but the spec has " +
                         std::to_string(spec.layers.size()));
    }
}

} // namespace

template <typename T>
ForwardTrace<T> forward(const NetworkSpec& spec, const BasicNetworkParams<T>& params, const BasicTensor<T>& input) {
    check_congruent(spec, params.layers.size());
    const bool dense = std::any_of(spec.layers.begin(), spec.layers.end(),
                                   [](const LayerSpec& l) { return l.kind == LayerKind::fully_connected; });
    if (dense || input.rank() != 4 || params.input_shape.size() != 4 || input.extent(3) != params.input_shape[3]) {
        require_same_shape(params.input_shape, input.shape(), "network input");
    }
    ForwardTrace<T> tr;
    tr.activations.reserve(spec.layers.size() + 1);
    tr.activations.push_back(input);
    tr.pools.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const BasicTensor<T>& x = tr.activations.back();
        const LayerParams<T>& p = params.layers[i];
        switch (spec.layers[i].kind) {
        case LayerKind::conv3d: tr.activations.push_back(conv3d_forward(x, p.conv, spec.padding)); break;
        case LayerKind::softmax: tr.activations.push_back(conv3d_forward(x, p.conv, Padding::same)); break;
        case LayerKind::maxpool: {
            PoolRecord<T> rec = maxpool3d(x);
            tr.activations.push_back(rec.output);
            tr.pools[i] = std::move(rec);
            break;
        }
        case LayerKind::fully_connected: {
            std::vector<T> y = dense_forward<T>(x.data(), p.dense);
            const std::size_t units = y.size();
            tr.activations.push_back(BasicTensor<T>(Shape{1, 1, 1, units}, std::move(y)));
            break;
        }
        }
    }
    return tr;
}

template <typename T>
NetworkGrads<T> backward(const NetworkSpec& spec, const BasicNetworkParams<T>& params, const ForwardTrace<T>& trace,
                         const BasicTensor<T>& grad_logits, bool want_input_grad) {
    check_congruent(spec, params.layers.size());
    require_same_shape(trace.logits().shape(), grad_logits.shape(), "network grad_logits");
    NetworkGrads<T> g;
    g.params = params.zeros_like();
    BasicTensor<T> grad = grad_logits;
    for (std::size_t i = spec.layers.size(); i-- > 0;) {
        const bool need_input = i > 0 || want_input_grad;
        const BasicTensor<T>& x = trace.activations[i];
        const BasicTensor<T>& y = trace.activations[i + 1];
        const LayerParams<T>& p = params.layers[i];
        LayerParams<T>& gp = g.params.layers[i];
        switch (spec.layers[i].kind) {
        case LayerKind::conv3d:
        case LayerKind::softmax: {
            ConvGrads<T> cg = conv3d_backward(
                x, p.conv, spec.layers[i].kind == LayerKind::conv3d ? spec.padding : Padding::same, y, grad);
            gp.conv.kernels = std::move(cg.grad_kernels);
            gp.conv.biases = std::move(cg.grad_biases);
            grad = std::move(cg.grad_input);
            break;
        }
        case LayerKind::maxpool:
            if (need_input) grad = unpool3d(*trace.pools[i], grad);
            break;
        case LayerKind::fully_connected: {
            DenseGrads<T> dg = dense_backward<T>(x.data(), p.dense, y.data(), grad.data());
            gp.dense.weights = std::move(dg.grad_weights);
            gp.dense.biases = std::move(dg.grad_biases);
            grad = BasicTensor<T>(x.shape(), std::move(dg.grad_input));
            break;
        }
        }
    }
    if (want_input_grad) g.input = std::move(grad);
    return g;
}

template <typename T>
void sgd_step(BasicNetworkParams<T>& params, const BasicNetworkParams<T>& grads, double learning_rate) {
    std::vector<std::span<const T>> gs;
    grads.for_each_array(std::function<void(std::span<const T>)>([&](std::span<const T> s) { gs.push_back(s); }));
    std::size_t i = 0;
    params.for_each_array(std::function<void(std::span<T>)>([&](std::span<T> s) {
        if (i >= gs.size() || gs[i].size() != s.size()) throw ShapeError("sgd_step: gradient layout mismatch");
        sgd_step<T>(s, gs[i++], learning_rate);
    }));
    if (i != gs.size()) throw ShapeError("sgd_step: gradient layout mismatch");
}

std::string checkpoint_bytes(const NetworkSpec& spec, const NetworkParams& params) {
    check_congruent(spec, params.layers.size());
    std::string out = "HCNN";
    const std::string text = spec.serialize();
    put_le<std::uint32_t>(out, std::uint32_t(text.size()));
    out += text;
    put_le<std::uint32_t>(out, std::uint32_t(params.input_shape.size()));
    for (std::size_t e : params.input_shape) put_le<std::uint32_t>(out, std::uint32_t(e));
    std::vector<std::span<const float>> arrays;
    params.for_each_array(
        std::function<void(std::span<const float>)>([&](std::span<const float> s) { arrays.push_back(s); }));
    put_le<std::uint32_t>(out, std::uint32_t(arrays.size()));
    for (auto s : arrays) {
        put_le<std::uint64_t>(out, s.size());
        for (float v : s) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

void write_checkpoint(const NetworkSpec& spec, const NetworkParams& params, const std::filesystem::path& path) {
    dump(path, checkpoint_bytes(spec, params));
}

std::pair<NetworkSpec, NetworkParams> read_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = slurp(path);
    check_magic(bytes, "HCNN", path);
    std::uint64_t pos = 4;
    auto u32 = [&](const char* what) {
        need(bytes, pos + 4, path, what);
        const auto v = get_le<std::uint32_t>(bytes.data() + pos);
        pos += 4;
        return v;
    };
    const std::uint32_t text_len = u32("spec length");
    need(bytes, pos + text_len, path, "spec text");
    NetworkSpec spec = NetworkSpec::parse(bytes.substr(pos, text_len));
    pos += text_len;
    const std::uint32_t rank = u32("input rank");
    if (rank != 4) throw CorruptionError("'" + path.string() + "' declares input rank " + std::to_string(rank));
    Shape input(rank);
    for (auto& e : input) {
        e = u32("input extent");
        if (e == 0) throw ExtentOverflowError("'" + path.string() + "' declares a zero input extent");
    }
    // Rebuild the layout from the spec, then fill the arrays.
    NetworkParams params = init_params<float>(spec, input, 0);
    std::vector<std::span<float>> arrays;
    params.for_each_array(std::function<void(std::span<float>)>([&](std::span<float> s) { arrays.push_back(s); }));
    const std::uint32_t count = u32("array count");
    if (count != arrays.size()) {
        throw CorruptionError("'" + path.string() + "' holds " + std::to_string(count) + " arrays, spec needs " +
                              std::to_string(arrays.size()));
    }
    for (auto s : arrays) {
        need(bytes, pos + 8, path, "array length");
        const auto n = get_le<std::uint64_t>(bytes.data() + pos);
        pos += 8;
        if (n != s.size()) {
            throw CorruptionError("'" + path.string() + "' array of " + std::to_string(n) + " values, expected " +
                                  std::to_string(s.size()));
        }
        need(bytes, pos + 4 * n, path, "array values");
        for (auto& v : s) {
            v = std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + pos));
            pos += 4;
        }
    }
    if (pos != bytes.size()) throw CorruptionError("'" + path.string() + "' has trailing bytes");
    return {std::move(spec), std::move(params)};
}

#define HSI_INSTANTIATE_NETWORK(T)                                                                                   \
    template struct BasicNetworkParams<T>;                                                                           \
    template BasicNetworkParams<T> init_params<T>(const NetworkSpec&, const Shape&, std::uint64_t);                 \
    template struct ForwardTrace<T>;                                                                                 \
    template ForwardTrace<T> forward<T>(const NetworkSpec&, const BasicNetworkParams<T>&, const BasicTensor<T>&);   \
    template NetworkGrads<T> backward<T>(const NetworkSpec&, const BasicNetworkParams<T>&, const ForwardTrace<T>&,  \
                                         const BasicTensor<T>&, bool);                                               \
    template void sgd_step<T>(BasicNetworkParams<T>&, const BasicNetworkParams<T>&, double);

HSI_INSTANTIATE_NETWORK(float)
HSI_INSTANTIATE_NETWORK(double)

template BasicNetworkParams<double> BasicNetworkParams<float>::cast<double>() const;
template BasicNetworkParams<float> BasicNetworkParams<double>::cast<float>() const;

} // namespace hsi
