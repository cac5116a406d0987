#include "phyvae/nn.hpp"

#include <cmath>

#include "phyvae/errors.hpp"

namespace phyvae {

ParamId ParameterSet::add(std::string path, Tensor init) {
    if (find(path) != size()) throw std::invalid_argument("duplicate parameter path " + path);
    paths_.push_back(std::move(path));
    values_.push_back(std::move(init));
    return ParamId{values_.size() - 1};
}

std::size_t ParameterSet::find(const std::string& path) const {
    for (std::size_t i = 0; i < paths_.size(); ++i)
        if (paths_[i] == path) return i;
    return paths_.size();
}

std::size_t ParameterSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
}

Binding ParameterSet::bind(Tape& tape) const {
    std::vector<Var> vars;
    vars.reserve(values_.size());
    for (const auto& v : values_) vars.push_back(tape.leaf(v, true));
    return Binding(std::move(vars));
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t h) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::mt19937_64 stream_for(std::uint64_t seed, std::string_view label) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(fnv1a64(label)), static_cast<std::uint32_t>(fnv1a64(label) >> 32)};
    return std::mt19937_64(seq);
}

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

Mlp Mlp::create(ParameterSet& params, const std::string& prefix, const std::vector<std::size_t>& widths,
                std::uint64_t seed, Activation hidden, Activation output) {
    if (widths.size() < 2) throw DimensionError("an MLP needs at least input and output widths");
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in = widths[l], out = widths[l + 1];
        const std::string path = prefix + ".layer" + std::to_string(l);
        auto rng = stream_for(seed, path);
        const double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
        DenseLayer layer;
        layer.in = in;
        layer.out = out;
        layer.weight = params.add(path + ".weight", normal_tensor({in, out}, stddev, rng));
        layer.bias = params.add(path + ".bias", Tensor({1, out}));
        layer.activation = l + 2 == widths.size() ? output : hidden;
        mlp.layers.push_back(layer);
    }
    return mlp;
}

void Mlp::validate(const ParameterSet& params) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Tensor& w = params.value(layers[l].weight);
        const Tensor& b = params.value(layers[l].bias);
        if (w.rank() != 2 || b.numel() != w.shape()[1])
            throw DimensionError("layer " + std::to_string(l) + " weight/bias shapes disagree");
        if (w.shape()[0] != layers[l].in || w.shape()[1] != layers[l].out)
            throw DimensionError("layer " + std::to_string(l) + " weight does not match its declared widths");
        if (l > 0 && params.value(layers[l - 1].weight).shape()[1] != w.shape()[0])
            throw DimensionError("layer " + std::to_string(l) + " input width does not chain");
    }
}

Var apply_activation(Activation act, const Var& x) {
    switch (act) {
        case Activation::tanh: return tanh(x);
        case Activation::softplus: return softplus(x);
        case Activation::identity: return x;
    }
    return x;
}

Var mlp_forward(const Mlp& mlp, const Binding& bound, const Var& x) {
    Var h = x;
    for (const auto& layer : mlp.layers) {
        if (h.value().cols() != layer.in)
            throw DimensionError("mlp input width " + std::to_string(h.value().cols()) + ", layer expects " +
                                 std::to_string(layer.in));
        h = apply_activation(layer.activation, affine(h, bound[layer.weight], bound[layer.bias]));
    }
    return h;
}

}  // namespace phyvae
