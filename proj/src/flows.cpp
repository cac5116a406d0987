#include "phyvae/flows.hpp"

#include <cmath>

#include "phyvae/errors.hpp"

namespace phyvae {

namespace {
constexpr double kSingularThreshold = 1e-12;
}

FlowChain FlowChain::create(ParameterSet& params, const std::string& prefix, std::size_t dim, std::size_t length,
                            std::uint64_t seed, double init_stddev) {
    FlowChain chain;
    chain.dim = dim;
    for (std::size_t k = 0; k < length; ++k) {
        const std::string path = prefix + ".flow" + std::to_string(k);
        auto rng = stream_for(seed, path);
        PlanarFlowParams f;
        f.u = params.add(path + ".u", normal_tensor({1, dim}, init_stddev, rng));
        f.w = params.add(path + ".w", normal_tensor({1, dim}, init_stddev, rng));
        f.b = params.add(path + ".b", Tensor({1, 1}));
        chain.flows.push_back(f);
    }
    return chain;
}

Var constrain_u(const Var& u, const Var& w) {
    if (u.value().numel() != w.value().numel()) throw DimensionError("constrain_u: u and w differ in dimension");
    Var wu = matmul_nt(w, u);
    Var wnorm2 = matmul_nt(w, w);
    if (wnorm2.value().item() == 0.0) throw DegenerateDirectionError("planar flow direction w is zero");
    Var m = add_scalar(softplus(wu), -1.0);
    return add(u, mul(w, div(sub(m, wu), wnorm2)));
}

FlowStep planar_forward(const Var& z, const Var& u_hat, const Var& w, const Var& b) {
    if (z.value().cols() != w.value().numel() || u_hat.value().numel() != w.value().numel())
        throw DimensionError("planar_forward: latent width " + std::to_string(z.value().cols()) +
                             " does not match flow dimension " + std::to_string(w.value().numel()));
    Tape& tape = *z.tape();
    Var pre = add(matmul_nt(z, w), b);  // [N,1]
    Var act = tanh(pre);
    Var z_next = add(z, matmul(act, u_hat));
    Var wu_hat = matmul_nt(w, u_hat);  // [1,1]
    Var slope = tanh_grad(act, tape.constant(Tensor(act.shape(), 1.0)));
    Var jac = add_scalar(mul(slope, wu_hat), 1.0);
    for (double v : jac.value().data())
        if (std::abs(v) < kSingularThreshold) throw SingularJacobianError("planar flow Jacobian is singular");
    return {z_next, log(abs(jac))};
}

FlowStep chain_forward(const Var& z0, const FlowChain& chain, const Binding& bound) {
    if (z0.value().cols() != chain.dim)
        throw DimensionError("chain_forward: latent width " + std::to_string(z0.value().cols()) + ", chain dim " +
                             std::to_string(chain.dim));
    Var z = z0;
    Var total = z0.tape()->constant(Tensor({z0.value().rows(), 1}));
    for (const auto& f : chain.flows) {
        Var w = bound[f.w];
        FlowStep step = planar_forward(z, constrain_u(bound[f.u], w), w, bound[f.b]);
        z = step.z;
        total = add(total, step.log_det);
    }
    return {z, total};
}

Var flow_log_density(const Var& log_q0, const Var& sum_log_det) { return sub(log_q0, sum_log_det); }

}  // namespace phyvae
