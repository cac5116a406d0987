#include "phyvae/attention.hpp"

#include <cmath>

#include "phyvae/errors.hpp"

namespace phyvae {

AttentionParams AttentionParams::create(ParameterSet& params, const std::string& prefix, std::size_t dim,
                                        std::uint64_t seed, double init_stddev) {
    AttentionParams a;
    a.dim = dim;
    auto rng = stream_for(seed, prefix);
    a.omega_q = params.add(prefix + ".omega_q", normal_tensor({dim, dim}, init_stddev, rng));
    a.omega_k = params.add(prefix + ".omega_k", normal_tensor({dim, dim}, init_stddev, rng));
    a.omega_v = params.add(prefix + ".omega_v", normal_tensor({dim, dim}, init_stddev, rng));
    a.beta_q = params.add(prefix + ".beta_q", Tensor({1, dim}));
    a.beta_k = params.add(prefix + ".beta_k", Tensor({1, dim}));
    a.beta_v = params.add(prefix + ".beta_v", Tensor({1, dim}));
    return a;
}

AttentionOutput self_attention(const Var& x, const AttentionParams& params, const Binding& bound) {
    if (x.value().rows() == 0) throw EmptyBatchError("self_attention over an empty batch");
    if (x.value().cols() != params.dim)
        throw DimensionError("self_attention: input width " + std::to_string(x.value().cols()) +
                             ", attention dim " + std::to_string(params.dim));
    // Row form: q_n^T = x_n^T Omega_q^T + beta_q^T.
    Var values = add(matmul_nt(x, bound[params.omega_v]), bound[params.beta_v]);
    Var queries = add(matmul_nt(x, bound[params.omega_q]), bound[params.beta_q]);
    Var keys = add(matmul_nt(x, bound[params.omega_k]), bound[params.beta_k]);
    Var logits = scale(matmul_nt(queries, keys), 1.0 / std::sqrt(static_cast<double>(params.dim)));
    Var weights = softmax_lastdim(logits);
    return {matmul(weights, values), weights};
}

Var attentive_fuse(const Var& z, const Var& z_att) {
    if (z.shape() != z_att.shape())
        throw DimensionError("attentive_fuse: " + shape_string(z.shape()) + " vs " + shape_string(z_att.shape()));
    return add(z, mul(z, z_att));
}

}  // namespace phyvae
