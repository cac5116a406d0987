#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "phyvae/nn.hpp"
#include "phyvae/tape.hpp"

namespace phyvae {

/// One planar bijection g(z) = z + u tanh(w^T z + b). u, w are [1, D], b is [1, 1].
struct PlanarFlowParams {
    ParamId u;
    ParamId w;
    ParamId b;
};

/// K planar flows over a shared latent dimension. K = 0 is the identity.
struct FlowChain {
    std::size_t dim = 0;
    std::vector<PlanarFlowParams> flows;

    std::size_t length() const noexcept { return flows.size(); }

    /// u, w ~ N(0, init_stddev^2), b = 0.
    static FlowChain create(ParameterSet& params, const std::string& prefix, std::size_t dim, std::size_t length,
                            std::uint64_t seed, double init_stddev = 0.1);
};

struct FlowStep {
    Var z;        // [N, D]
    Var log_det;  // [N, 1]
};

/// Projects u so that w^T u_hat >= -1:
///   u_hat = u + (m(w^T u) - w^T u) w / |w|^2,   m(a) = -1 + softplus(a).
/// Throws DegenerateDirectionError when w = 0.
Var constrain_u(const Var& u, const Var& w);

/// One flow on a batch z [N, D] with an already constrained u_hat. Returns
/// z' = z + u_hat tanh(w^T z + b) and log|1 + u_hat^T psi(z)| with
/// psi(z) = tanh'(w^T z + b) w.
FlowStep planar_forward(const Var& z, const Var& u_hat, const Var& w, const Var& b);

/// Applies the chain in order; log_det is the sum over flows, [N, 1].
FlowStep chain_forward(const Var& z0, const FlowChain& chain, const Binding& bound);

/// log q_K(z_K) = log q_0(z_0) - sum_k log|det J_k|.
Var flow_log_density(const Var& log_q0, const Var& sum_log_det);

}  // namespace phyvae
