#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "phyvae/nn.hpp"
#include "phyvae/tape.hpp"

namespace phyvae {

/// Single-head scaled dot-product self-attention over a batch of latents.
/// Weights are [D, D], biases [1, D]; none depend on the batch size.
struct AttentionParams {
    std::size_t dim = 0;
    ParamId omega_q, omega_k, omega_v;
    ParamId beta_q, beta_k, beta_v;

    /// Weights ~ N(0, init_stddev^2), biases zero.
    static AttentionParams create(ParameterSet& params, const std::string& prefix, std::size_t dim,
                                  std::uint64_t seed, double init_stddev = 0.1);
};

struct AttentionOutput {
    Var output;   // [N, D]; row n is SA_n
    Var weights;  // [N, N]; row n holds a[x_m, x_n] over m, sums to one
};

/// Rows of `x` are the N inputs. Values, queries and keys are affine maps of
/// each row; output row n = sum_m softmax_m(k_m . q_n / sqrt(D)) v_m.
AttentionOutput self_attention(const Var& x, const AttentionParams& params, const Binding& bound);

/// z + z * z_att, elementwise.
Var attentive_fuse(const Var& z, const Var& z_att);

}  // namespace phyvae
