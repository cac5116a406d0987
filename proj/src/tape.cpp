#include "phyvae/tape.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "phyvae/errors.hpp"

namespace phyvae {

std::string_view op_name(OpTag tag) {
    switch (tag) {
        case OpTag::leaf: return "leaf";
        case OpTag::matmul: return "matmul";
        case OpTag::matmul_nt: return "matmul_nt";
        case OpTag::matmul_tn: return "matmul_tn";
        case OpTag::affine: return "affine";
        case OpTag::add: return "add";
        case OpTag::sub: return "sub";
        case OpTag::mul: return "elementwise_mul";
        case OpTag::div: return "div";
        case OpTag::neg: return "neg";
        case OpTag::scale: return "scale";
        case OpTag::add_scalar: return "add_scalar";
        case OpTag::tanh: return "tanh";
        case OpTag::tanh_grad: return "tanh_grad";
        case OpTag::sigmoid: return "sigmoid";
        case OpTag::softplus: return "softplus";
        case OpTag::exp: return "exp";
        case OpTag::log: return "log";
        case OpTag::abs: return "abs";
        case OpTag::square: return "square";
        case OpTag::sum: return "sum";
        case OpTag::mean: return "mean";
        case OpTag::sum_rows: return "sum_rows";
        case OpTag::sum_cols: return "sum_cols";
        case OpTag::broadcast_rows: return "broadcast_rows";
        case OpTag::broadcast_cols: return "broadcast_cols";
        case OpTag::expand_scalar: return "expand_scalar";
        case OpTag::softmax_lastdim: return "softmax_lastdim";
        case OpTag::concat_lastdim: return "concat_lastdim";
        case OpTag::slice_lastdim: return "slice";
        case OpTag::pad_lastdim: return "pad";
        case OpTag::reshape: return "reshape";
        case OpTag::opaque: return "opaque";
    }
    return "unknown";
}

const Tensor& Var::value() const {
    if (!tape_) throw std::logic_error("use of an unbound Var");
    return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

const Tensor& Gradients::operator[](const Var& leaf) const {
    auto it = map_.find(leaf.id());
    if (it == map_.end()) throw std::out_of_range("no gradient recorded for node " + std::to_string(leaf.id()));
    return it->second;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    if (!value.all_finite()) throw NumericDomainError("leaf tensor contains non-finite values");
    Node n;
    n.op = OpTag::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpTag op, std::vector<std::size_t> inputs, Tensor value, double scalar, std::size_t offset,
                 std::size_t extent) {
    if (!value.all_finite())
        throw NumericDomainError(std::string(op_name(op)) + " produced non-finite values");
    Node n;
    n.op = op;
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.scalar = scalar;
    n.offset = offset;
    n.extent = extent;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
    if (!a.tape() || a.tape() != b.tape()) throw std::logic_error("operands recorded on different tapes");
    return *a.tape();
}

// Glue so one templated rule body serves both Tensor and Var sweeps.
const Tensor& value_of(const Tensor& t) { return t; }
const Tensor& value_of(const Var& v) { return v.value(); }
Tensor lift(const Tensor&, Tensor t) { return t; }
Var lift(const Var& like, Tensor t) { return like.tape()->constant(std::move(t)); }
Tensor reshape_to(const Tensor& t, const Shape& s) { return t.shape() == s ? t : t.reshaped(s); }
Var reshape_to(const Var& v, const Shape& s) { return v.shape() == s ? v : reshape(v, s); }

template <class V>
V reduce_to(const V& g, const Shape& target) {
    if (value_of(g).shape() == target) return g;
    if (shape_numel(target) == 1) return reshape_to(sum(g), target);
    if (shape_numel(target) == value_of(g).cols()) return reshape_to(sum_rows(g), target);
    throw DimensionError("cannot reduce gradient of shape " + shape_string(value_of(g).shape()) + " to " +
                         shape_string(target));
}

// Input gradients of one node given the upstream gradient g. Entries whose
// `need` flag is false are left empty.
template <class V>
std::vector<std::optional<V>> apply_rule(const Node& node, std::span<const V* const> in, const V& out, const V& g,
                                         std::span<const char> need) {
    std::vector<std::optional<V>> r(in.size());
    auto want = [&](std::size_t i) { return static_cast<bool>(need[i]); };
    const V* a = in.empty() ? nullptr : in[0];
    const V* b = in.size() > 1 ? in[1] : nullptr;
    switch (node.op) {
        case OpTag::leaf:
            break;
        case OpTag::matmul:
            if (want(0)) r[0] = matmul_nt(g, *b);
            if (want(1)) r[1] = matmul_tn(*a, g);
            break;
        case OpTag::matmul_nt:
            if (want(0)) r[0] = matmul(g, *b);
            if (want(1)) r[1] = matmul_tn(g, *a);
            break;
        case OpTag::matmul_tn:
            if (want(0)) r[0] = matmul_nt(*b, g);
            if (want(1)) r[1] = matmul(*a, g);
            break;
        case OpTag::affine:
            if (want(0)) r[0] = matmul_nt(g, *b);
            if (want(1)) r[1] = matmul_tn(*a, g);
            if (want(2)) r[2] = reshape_to(sum_rows(g), value_of(*in[2]).shape());
            break;
        case OpTag::add:
            if (want(0)) r[0] = g;
            if (want(1)) r[1] = reduce_to(g, value_of(*b).shape());
            break;
        case OpTag::sub:
            if (want(0)) r[0] = g;
            if (want(1)) r[1] = reduce_to(neg(g), value_of(*b).shape());
            break;
        case OpTag::mul:
            if (want(0)) r[0] = mul(g, *b);
            if (want(1)) r[1] = reduce_to(mul(g, *a), value_of(*b).shape());
            break;
        case OpTag::div:
            if (want(0)) r[0] = div(g, *b);
            if (want(1)) r[1] = reduce_to(neg(div(mul(g, out), *b)), value_of(*b).shape());
            break;
        case OpTag::neg:
            r[0] = neg(g);
            break;
        case OpTag::scale:
            r[0] = scale(g, node.scalar);
            break;
        case OpTag::add_scalar:
            r[0] = g;
            break;
        case OpTag::tanh:
            r[0] = tanh_grad(out, g);
            break;
        case OpTag::tanh_grad:
            // out = g_in * (1 - y^2)
            if (want(0)) r[0] = scale(mul(mul(g, *b), *a), -2.0);
            if (want(1)) r[1] = tanh_grad(*a, g);
            break;
        case OpTag::sigmoid:
            r[0] = mul(g, sub(out, square(out)));
            break;
        case OpTag::softplus:
            r[0] = mul(g, sigmoid(*a));
            break;
        case OpTag::exp:
            r[0] = mul(g, out);
            break;
        case OpTag::log:
            r[0] = div(g, *a);
            break;
        case OpTag::abs:
            r[0] = mul(g, lift(g, sign(value_of(*a))));
            break;
        case OpTag::square:
            r[0] = scale(mul(g, *a), 2.0);
            break;
        case OpTag::sum:
            r[0] = expand_scalar(g, value_of(*a).shape());
            break;
        case OpTag::mean:
            r[0] = scale(expand_scalar(g, value_of(*a).shape()), 1.0 / static_cast<double>(value_of(*a).numel()));
            break;
        case OpTag::sum_rows:
            r[0] = reshape_to(broadcast_rows(g, value_of(*a).rows()), value_of(*a).shape());
            break;
        case OpTag::sum_cols:
            r[0] = reshape_to(broadcast_cols(g, value_of(*a).cols()), value_of(*a).shape());
            break;
        case OpTag::broadcast_rows:
            r[0] = reshape_to(sum_rows(g), value_of(*a).shape());
            break;
        case OpTag::broadcast_cols:
            r[0] = reshape_to(sum_cols(g), value_of(*a).shape());
            break;
        case OpTag::expand_scalar:
            r[0] = reshape_to(sum(g), value_of(*a).shape());
            break;
        case OpTag::softmax_lastdim:
            r[0] = mul(out, sub(g, broadcast_cols(sum_cols(mul(g, out)), value_of(out).cols())));
            break;
        case OpTag::concat_lastdim: {
            std::size_t offset = 0;
            for (std::size_t i = 0; i < in.size(); ++i) {
                const std::size_t w = value_of(*in[i]).cols();
                if (want(i)) r[i] = reshape_to(slice_lastdim(g, offset, w), value_of(*in[i]).shape());
                offset += w;
            }
            break;
        }
        case OpTag::slice_lastdim:
            r[0] = reshape_to(pad_lastdim(g, node.offset, value_of(*a).cols()), value_of(*a).shape());
            break;
        case OpTag::pad_lastdim:
            r[0] = reshape_to(slice_lastdim(g, node.offset, value_of(*a).cols()), value_of(*a).shape());
            break;
        case OpTag::reshape:
            r[0] = reshape_to(g, value_of(*a).shape());
            break;
        case OpTag::opaque:
            throw MissingBackwardRule("no backward rule for recorded op '" + std::string(op_name(node.op)) + "'");
    }
    return r;
}

}  // namespace

std::vector<char> Tape::relevance(std::size_t output, std::span<const std::size_t> targets, std::size_t lo) const {
    std::vector<char> rel(output + 1, 0);
    for (std::size_t t : targets)
        if (t <= output) rel[t] = 1;
    for (std::size_t i = lo; i <= output; ++i) {
        if (rel[i]) continue;
        for (std::size_t j : nodes_[i].inputs)
            if (rel[j]) {
                rel[i] = 1;
                break;
            }
    }
    return rel;
}

// Reverse sweep over [lo, output]. V = Tensor evaluates gradients directly;
// V = Var records them. Tensor sweeps drop intermediate gradients once they
// have been propagated.
template <class V>
struct Sweep {
    static std::vector<std::optional<V>> run(const Tape& tape, std::size_t output, V seed,
                                             std::span<const std::size_t> targets) {
        if (tape.nodes_.empty()) throw std::logic_error("backward on an empty computation record");
        if (output >= tape.nodes_.size()) throw std::out_of_range("backward output is not on this tape");
        if (value_of(seed).shape() != tape.nodes_[output].value.shape())
            throw DimensionError("seed shape " + shape_string(value_of(seed).shape()) + " does not match output " +
                                 shape_string(tape.nodes_[output].value.shape()));
        std::size_t lo = output;
        for (std::size_t t : targets) lo = std::min(lo, t);
        const std::vector<char> rel = tape.relevance(output, targets, lo);
        std::vector<char> is_target(output + 1, 0);
        for (std::size_t t : targets)
            if (t <= output) is_target[t] = 1;

        std::vector<std::optional<V>> grads(output + 1);
        grads[output] = std::move(seed);
        Tape& mtape = const_cast<Tape&>(tape);
        for (std::size_t i = output + 1; i-- > lo;) {
            if (!rel[i] || !grads[i]) continue;
            const Node& node = tape.nodes_[i];
            if (node.op == OpTag::leaf) continue;
            std::vector<V> holders;
            std::vector<const V*> in;
            std::vector<char> need(node.inputs.size());
            holders.reserve(node.inputs.size() + 1);
            for (std::size_t k = 0; k < node.inputs.size(); ++k) need[k] = rel[node.inputs[k]];
            const V* out_ptr = nullptr;
            if constexpr (std::is_same_v<V, Tensor>) {
                for (std::size_t j : node.inputs) in.push_back(&tape.nodes_[j].value);
                out_ptr = &node.value;
            } else {
                for (std::size_t j : node.inputs) holders.emplace_back(&mtape, j);
                holders.emplace_back(&mtape, i);
                for (std::size_t k = 0; k < node.inputs.size(); ++k) in.push_back(&holders[k]);
                out_ptr = &holders.back();
            }
            auto gin = apply_rule<V>(node, in, *out_ptr, *grads[i], need);
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                if (!gin[k]) continue;
                auto& slot = grads[node.inputs[k]];
                if (slot) {
                    slot = add(*slot, *gin[k]);
                } else {
                    slot = std::move(gin[k]);
                }
            }
            if constexpr (std::is_same_v<V, Tensor>) {
                if (!is_target[i]) grads[i].reset();
            }
        }
        return grads;
    }
};

Gradients Tape::backward(const Var& output, const Tensor& seed) const {
    std::vector<std::size_t> leaves;
    for (std::size_t i = 0; i <= output.id() && i < nodes_.size(); ++i)
        if (nodes_[i].op == OpTag::leaf && nodes_[i].requires_grad) leaves.push_back(i);
    Gradients out;
    if (leaves.empty()) {
        if (nodes_.empty()) throw std::logic_error("backward on an empty computation record");
        return out;
    }
    auto grads = Sweep<Tensor>::run(*this, output.id(), seed, leaves);
    for (std::size_t i : leaves)
        out.map_.emplace(i, grads[i] ? std::move(*grads[i]) : Tensor(nodes_[i].value.shape()));
    // Leaves recorded after the output cannot influence it.
    for (std::size_t i = output.id() + 1; i < nodes_.size(); ++i)
        if (nodes_[i].op == OpTag::leaf && nodes_[i].requires_grad) out.map_.emplace(i, Tensor(nodes_[i].value.shape()));
    return out;
}

Gradients Tape::backward(const Tensor& seed) const {
    if (nodes_.empty()) throw std::logic_error("backward on an empty computation record");
    return backward(Var(const_cast<Tape*>(this), nodes_.size() - 1), seed);
}

std::vector<Tensor> Tape::backward(const Var& output, const Tensor& seed, std::span<const Var> wrt) const {
    std::vector<std::size_t> ids;
    for (const Var& v : wrt) ids.push_back(v.id());
    auto grads = Sweep<Tensor>::run(*this, output.id(), seed, ids);
    std::vector<Tensor> out;
    for (const Var& v : wrt) {
        if (v.id() <= output.id() && grads[v.id()]) {
            out.push_back(*grads[v.id()]);
        } else {
            out.emplace_back(nodes_[v.id()].value.shape());
        }
    }
    return out;
}

std::vector<Var> Tape::grad(const Var& output, const Tensor& seed, std::span<const Var> wrt) {
    std::vector<std::size_t> ids;
    for (const Var& v : wrt) ids.push_back(v.id());
    auto grads = Sweep<Var>::run(*this, output.id(), constant(seed), ids);
    std::vector<Var> out;
    for (const Var& v : wrt) {
        if (v.id() <= output.id() && grads[v.id()]) {
            out.push_back(*grads[v.id()]);
        } else {
            out.push_back(constant(Tensor(nodes_[v.id()].value.shape())));
        }
    }
    return out;
}

// ---- recorded primitives ----

Var matmul(const Var& a, const Var& b) {
    return same_tape(a, b).record(OpTag::matmul, {a.id(), b.id()}, matmul(a.value(), b.value()));
}
Var matmul_nt(const Var& a, const Var& b) {
    return same_tape(a, b).record(OpTag::matmul_nt, {a.id(), b.id()}, matmul_nt(a.value(), b.value()));
}
Var matmul_tn(const Var& a, const Var& b) {
    return same_tape(a, b).record(OpTag::matmul_tn, {a.id(), b.id()}, matmul_tn(a.value(), b.value()));
}
Var affine(const Var& x, const Var& w, const Var& b) {
    same_tape(x, w);
    return same_tape(x, b).record(OpTag::affine, {x.id(), w.id(), b.id()}, affine(x.value(), w.value(), b.value()));
}
Var add(const Var& a, const Var& b) {
    return same_tape(a, b).record(OpTag::add, {a.id(), b.id()}, add(a.value(), b.value()));
}
Var sub(const Var& a, const Var& b) {
    return same_tape(a, b).record(OpTag::sub, {a.id(), b.id()}, sub(a.value(), b.value()));
}
Var mul(const Var& a, const Var& b) {
    return same_tape(a, b).record(OpTag::mul, {a.id(), b.id()}, mul(a.value(), b.value()));
}
Var div(const Var& a, const Var& b) {
    return same_tape(a, b).record(OpTag::div, {a.id(), b.id()}, div(a.value(), b.value()));
}
Var neg(const Var& a) { return a.tape()->record(OpTag::neg, {a.id()}, neg(a.value())); }
Var scale(const Var& a, double c) { return a.tape()->record(OpTag::scale, {a.id()}, scale(a.value(), c), c); }
Var add_scalar(const Var& a, double c) {
    return a.tape()->record(OpTag::add_scalar, {a.id()}, add_scalar(a.value(), c), c);
}
Var tanh(const Var& a) { return a.tape()->record(OpTag::tanh, {a.id()}, tanh(a.value())); }
Var tanh_grad(const Var& y, const Var& g) {
    return same_tape(y, g).record(OpTag::tanh_grad, {y.id(), g.id()}, tanh_grad(y.value(), g.value()));
}
Var sigmoid(const Var& a) { return a.tape()->record(OpTag::sigmoid, {a.id()}, sigmoid(a.value())); }
Var softplus(const Var& a) { return a.tape()->record(OpTag::softplus, {a.id()}, softplus(a.value())); }

Var exp(const Var& a) {
    Tensor v = exp(a.value());
    if (!v.all_finite()) throw NumericDomainError("exp overflow");
    return a.tape()->record(OpTag::exp, {a.id()}, std::move(v));
}

Var log(const Var& a) {
    for (double x : a.value().data())
        if (!(x > 0.0)) throw NumericDomainError("log of nonpositive value " + std::to_string(x));
    return a.tape()->record(OpTag::log, {a.id()}, log(a.value()));
}

Var abs(const Var& a) { return a.tape()->record(OpTag::abs, {a.id()}, abs(a.value())); }
Var square(const Var& a) { return a.tape()->record(OpTag::square, {a.id()}, square(a.value())); }
Var sum(const Var& a) { return a.tape()->record(OpTag::sum, {a.id()}, sum(a.value())); }
Var mean(const Var& a) { return a.tape()->record(OpTag::mean, {a.id()}, mean(a.value())); }
Var sum_rows(const Var& a) { return a.tape()->record(OpTag::sum_rows, {a.id()}, sum_rows(a.value())); }
Var sum_cols(const Var& a) { return a.tape()->record(OpTag::sum_cols, {a.id()}, sum_cols(a.value())); }

Var broadcast_rows(const Var& row, std::size_t rows) {
    return row.tape()->record(OpTag::broadcast_rows, {row.id()}, broadcast_rows(row.value(), rows), 0.0, 0, rows);
}
Var broadcast_cols(const Var& col, std::size_t cols) {
    return col.tape()->record(OpTag::broadcast_cols, {col.id()}, broadcast_cols(col.value(), cols), 0.0, 0, cols);
}
Var expand_scalar(const Var& s, const Shape& shape) {
    return s.tape()->record(OpTag::expand_scalar, {s.id()}, expand_scalar(s.value(), shape));
}
Var softmax_lastdim(const Var& a) {
    return a.tape()->record(OpTag::softmax_lastdim, {a.id()}, softmax_lastdim(a.value()));
}

Var concat_lastdim(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    std::vector<const Tensor*> values;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        same_tape(parts[0], p);
        values.push_back(&p.value());
        ids.push_back(p.id());
    }
    return parts[0].tape()->record(OpTag::concat_lastdim, std::move(ids), concat_lastdim(values));
}

Var slice_lastdim(const Var& a, std::size_t offset, std::size_t width) {
    return a.tape()->record(OpTag::slice_lastdim, {a.id()}, slice_lastdim(a.value(), offset, width), 0.0, offset,
                            width);
}
Var pad_lastdim(const Var& a, std::size_t offset, std::size_t total) {
    return a.tape()->record(OpTag::pad_lastdim, {a.id()}, pad_lastdim(a.value(), offset, total), 0.0, offset, total);
}
Var reshape(const Var& a, const Shape& shape) {
    return a.tape()->record(OpTag::reshape, {a.id()}, a.value().reshaped(shape));
}

Var detach(const Var& a) { return a.tape()->constant(a.value()); }

Var opaque(const Var& a, const std::function<Tensor(const Tensor&)>& f) {
    return a.tape()->record(OpTag::opaque, {a.id()}, f(a.value()));
}

}  // namespace phyvae
