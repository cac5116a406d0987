#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phyvae/tensor.hpp"

namespace phyvae {

enum class OpTag : std::uint8_t {
    leaf,
    matmul,
    matmul_nt,
    matmul_tn,
    affine,
    add,
    sub,
    mul,
    div,
    neg,
    scale,
    add_scalar,
    tanh,
    tanh_grad,
    sigmoid,
    softplus,
    exp,
    log,
    abs,
    square,
    sum,
    mean,
    sum_rows,
    sum_cols,
    broadcast_rows,
    broadcast_cols,
    expand_scalar,
    softmax_lastdim,
    concat_lastdim,
    slice_lastdim,
    pad_lastdim,
    reshape,
    opaque,  // recorded without a backward rule
};

std::string_view op_name(OpTag tag);

/// One recorded primitive. Inputs always precede the node on the tape.
struct Node {
    OpTag op = OpTag::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    double scalar = 0.0;      // scale / add_scalar constant
    std::size_t offset = 0;   // slice / pad offset
    std::size_t extent = 0;   // slice width, pad total, broadcast count
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Gradients of one reverse sweep, keyed by the requires_grad leaves of the tape.
class Gradients {
public:
    const Tensor& operator[](const Var& leaf) const;
    bool contains(const Var& leaf) const { return map_.contains(leaf.id()); }
    std::size_t size() const noexcept { return map_.size(); }

private:
    friend class Tape;
    std::unordered_map<std::size_t, Tensor> map_;
};

/// The computation record: an append-only list of primitive nodes in
/// topological order.
///
/// Reverse sweeps come in two flavours. `backward` evaluates gradients as
/// plain tensors and appends nothing. `grad` records the gradient computation
/// itself as new nodes, so a later sweep can differentiate through it (used by
/// the Hamiltonian vector field). Both share one set of backward rules.
///
/// Not thread safe; one tape per training step.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    std::size_t size() const noexcept { return nodes_.size(); }
    bool empty() const noexcept { return nodes_.empty(); }
    const Node& node(std::size_t id) const { return nodes_.at(id); }
    const Tensor& value(const Var& v) const { return nodes_.at(v.id()).value; }

    /// Gradients of `output` (seeded with `seed`) for every requires_grad leaf.
    /// Leaves the output does not depend on get zero gradients.
    Gradients backward(const Var& output, const Tensor& seed) const;
    /// Same, with the last recorded node as output.
    Gradients backward(const Tensor& seed) const;
    /// Tensor gradients for an explicit list of nodes (leaves or intermediates).
    std::vector<Tensor> backward(const Var& output, const Tensor& seed, std::span<const Var> wrt) const;
    /// Differentiable gradients: the sweep is recorded on this tape.
    std::vector<Var> grad(const Var& output, const Tensor& seed, std::span<const Var> wrt);

    /// Low-level: append a node. Validates finiteness of `value`.
    Var record(OpTag op, std::vector<std::size_t> inputs, Tensor value, double scalar = 0.0,
               std::size_t offset = 0, std::size_t extent = 0);

private:
    template <class V>
    friend struct Sweep;

    std::vector<char> relevance(std::size_t output, std::span<const std::size_t> targets, std::size_t lo) const;

    std::deque<Node> nodes_;
};

// Recorded primitives. Each mirrors the value-level function of the same name
// in tensor.hpp and appends one node.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);
Var matmul_tn(const Var& a, const Var& b);
Var affine(const Var& x, const Var& w, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var tanh(const Var& a);
Var tanh_grad(const Var& y, const Var& g);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_rows(const Var& a);
Var sum_cols(const Var& a);
Var broadcast_rows(const Var& row, std::size_t rows);
Var broadcast_cols(const Var& col, std::size_t cols);
Var expand_scalar(const Var& s, const Shape& shape);
Var softmax_lastdim(const Var& a);
Var concat_lastdim(std::span<const Var> parts);
Var slice_lastdim(const Var& a, std::size_t offset, std::size_t width);
Var pad_lastdim(const Var& a, std::size_t offset, std::size_t total);
Var reshape(const Var& a, const Shape& shape);

/// Copy of `a` as a constant: gradients stop here.
Var detach(const Var& a);
/// Applies `f` and records the result without a backward rule; a sweep that
/// reaches it raises MissingBackwardRule.
Var opaque(const Var& a, const std::function<Tensor(const Tensor&)>& f);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

}  // namespace phyvae
