#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "phyvae/nn.hpp"
#include "phyvae/tape.hpp"

namespace phyvae {

/// Uniform output grid for the ODE solver: `points` states on [t0, t1], with
/// `substeps` RK4 steps per output interval.
struct IntegrationGrid {
    double t0 = 0.0;
    double t1 = 1.0;
    std::size_t points = 100;
    std::size_t substeps = 1;

    void validate() const;
    double step() const;
};

/// Scalar energy H(state, z) per row: state [N, 2] = (p, q), z [N, dz] -> [N, 1].
using EnergyFn = std::function<Var(const Var& state, const Var& z)>;
/// Time-independent vector field dy/dt = f(y).
using VectorField = std::function<Var(const Var& state)>;

/// H as an MLP over (p, q, z_P): two tanh hidden layers, scalar output.
struct HamiltonianField {
    Mlp energy;
    std::size_t latent_dim = 0;

    static HamiltonianField create(ParameterSet& params, const std::string& prefix, std::size_t latent_dim,
                                   std::size_t hidden, std::uint64_t seed);
    EnergyFn bind(const Binding& bound) const;
};

/// (dp/dt, dq/dt) = (-dH/dq, dH/dp), differentiated exactly through H.
///
/// With `differentiable` the inner gradient is recorded so a later sweep can
/// differentiate the field itself (training). Without it the field enters the
/// tape as a constant (evaluation).
Var hamiltonian_vector_field(const EnergyFn& energy, const Var& state, const Var& z, bool differentiable = true);

/// Classical fixed-step RK4. Returns grid.points states, the first being y0.
/// A non-finite stage raises IntegrationError carrying the step index.
std::vector<Var> rk4_integrate(const VectorField& field, const Var& y0, const IntegrationGrid& grid);

/// Affine bridges between observations and the 2-d phase space:
/// (x0, z_P) -> (p0, q0) and (p, q) -> M channels.
struct PhaseReadout {
    std::size_t channels = 0;
    std::size_t latent_dim = 0;
    ParamId init_weight;  // [M + dz, 2]
    ParamId init_bias;    // [1, 2]
    ParamId out_weight;   // [2, M]
    ParamId out_bias;     // [1, M]

    static PhaseReadout create(ParameterSet& params, const std::string& prefix, std::size_t channels,
                               std::size_t latent_dim, std::uint64_t seed);
};

struct PhysicsDecoder {
    HamiltonianField field;
    PhaseReadout readout;
    IntegrationGrid grid;
};

struct PhysicsTrace {
    Var initial_state;          // [N, 2]
    std::vector<Var> states;    // grid.points entries of [N, 2]
    Var output;                 // [N, points * M], time-major
};

/// f_P for a batch: encode (x0, z_P) to a phase-space state, integrate the
/// Hamiltonian field, read every state out to M channels.
PhysicsTrace physics_decode(const PhysicsDecoder& decoder, const Binding& bound, const Var& z_p, const Var& x0,
                            bool differentiable = true);

/// Same map evaluated on plain tensors: each RK4 stage differentiates H on a
/// scratch tape, so memory stays flat. Used for evaluation.
Tensor physics_decode_values(const PhysicsDecoder& decoder, const ParameterSet& params, const Tensor& z_p,
                             const Tensor& x0);

}  // namespace phyvae
