#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "phyvae/tape.hpp"
#include "phyvae/tensor.hpp"

namespace phyvae {

struct ParamId {
    std::size_t index = 0;
};

class Binding;

/// Ordered, path-keyed collection of trainable tensors.
class ParameterSet {
public:
    ParamId add(std::string path, Tensor init);

    std::size_t size() const noexcept { return values_.size(); }
    Tensor& value(ParamId id) { return values_.at(id.index); }
    const Tensor& value(ParamId id) const { return values_.at(id.index); }
    Tensor& value(std::size_t i) { return values_.at(i); }
    const Tensor& value(std::size_t i) const { return values_.at(i); }
    const std::string& path(std::size_t i) const { return paths_.at(i); }
    /// Index of a path, or size() when absent.
    std::size_t find(const std::string& path) const;
    std::size_t parameter_count() const;

    /// Registers every tensor on `tape` as a requires_grad leaf.
    Binding bind(Tape& tape) const;

private:
    std::vector<std::string> paths_;
    std::vector<Tensor> values_;
};

/// ParameterSet leaves as recorded on one tape.
class Binding {
public:
    Binding() = default;
    explicit Binding(std::vector<Var> vars) : vars_(std::move(vars)) {}
    Var operator[](ParamId id) const { return vars_.at(id.index); }
    const std::vector<Var>& vars() const noexcept { return vars_; }
    Tape& tape() const { return *vars_.at(0).tape(); }

private:
    std::vector<Var> vars_;
};

/// Per-(seed, path) generator so a submodule's initial values do not depend
/// on which other submodules a model contains.
std::mt19937_64 stream_for(std::uint64_t seed, std::string_view label);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 1469598103934665603ull);

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng);

enum class Activation { tanh, identity, softplus };

struct DenseLayer {
    ParamId weight;  // [in, out]
    ParamId bias;    // [1, out]
    Activation activation = Activation::tanh;
    std::size_t in = 0;
    std::size_t out = 0;
};

/// Stack of affine maps with per-layer activations.
struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out; }

    /// Xavier-normal weights, zero biases. `widths` = {in, h1, ..., out}; hidden
    /// layers use `hidden`, the last layer `output`.
    static Mlp create(ParameterSet& params, const std::string& prefix, const std::vector<std::size_t>& widths,
                      std::uint64_t seed, Activation hidden = Activation::tanh,
                      Activation output = Activation::identity);

    /// Throws DimensionError unless consecutive layer widths chain.
    void validate(const ParameterSet& params) const;
};

Var apply_activation(Activation act, const Var& x);
Var mlp_forward(const Mlp& mlp, const Binding& bound, const Var& x);

}  // namespace phyvae
