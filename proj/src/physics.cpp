#include "phyvae/physics.hpp"

#include <array>
#include <cmath>

#include "phyvae/errors.hpp"

namespace phyvae {

void IntegrationGrid::validate() const {
    if (!(t0 < t1)) throw std::invalid_argument("integration grid needs t0 < t1");
    if (points < 2) throw std::invalid_argument("integration grid needs at least 2 points");
    if (substeps < 1) throw std::invalid_argument("integration grid needs at least 1 substep");
}

double IntegrationGrid::step() const {
    return (t1 - t0) / static_cast<double>((points - 1) * substeps);
}

HamiltonianField HamiltonianField::create(ParameterSet& params, const std::string& prefix, std::size_t latent_dim,
                                          std::size_t hidden, std::uint64_t seed) {
    HamiltonianField f;
    f.latent_dim = latent_dim;
    f.energy = Mlp::create(params, prefix + ".energy", {2 + latent_dim, hidden, hidden, 1}, seed);
    return f;
}

EnergyFn HamiltonianField::bind(const Binding& bound) const {
    return [this, &bound](const Var& state, const Var& z) {
        const std::array<Var, 2> parts{state, z};
        return mlp_forward(energy, bound, concat_lastdim(parts));
    };
}

Var hamiltonian_vector_field(const EnergyFn& energy, const Var& state, const Var& z, bool differentiable) {
    if (state.value().cols() != 2) throw DimensionError("phase-space state must be [N, 2]");
    Tape& tape = *state.tape();
    Var h = energy(state, z);
    if (h.value().cols() != 1 || h.value().rows() != state.value().rows())
        throw DimensionError("energy must be one scalar per row");
    const Tensor seed(h.shape(), 1.0);
    const std::array<Var, 1> wrt{state};
    Var dh;  // [N, 2] = (dH/dp, dH/dq)
    if (differentiable) {
        dh = tape.grad(h, seed, wrt)[0];
    } else {
        dh = tape.constant(tape.backward(h, seed, wrt)[0]);
    }
    const std::array<Var, 2> field{neg(slice_lastdim(dh, 1, 1)), slice_lastdim(dh, 0, 1)};
    return concat_lastdim(field);
}

std::vector<Var> rk4_integrate(const VectorField& field, const Var& y0, const IntegrationGrid& grid) {
    grid.validate();
    const double h = grid.step();
    std::vector<Var> states{y0};
    states.reserve(grid.points);
    Var y = y0;
    std::size_t step = 0;
    for (std::size_t p = 1; p < grid.points; ++p) {
        for (std::size_t s = 0; s < grid.substeps; ++s, ++step) {
            try {
                Var k1 = field(y);
                Var k2 = field(add(y, scale(k1, 0.5 * h)));
                Var k3 = field(add(y, scale(k2, 0.5 * h)));
                Var k4 = field(add(y, scale(k3, h)));
                Var incr = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4));
                y = add(y, scale(incr, h / 6.0));
            } catch (const NumericDomainError& e) {
                throw IntegrationError(step, e.what());
            }
        }
        states.push_back(y);
    }
    return states;
}

PhaseReadout PhaseReadout::create(ParameterSet& params, const std::string& prefix, std::size_t channels,
                                  std::size_t latent_dim, std::uint64_t seed) {
    PhaseReadout r;
    r.channels = channels;
    r.latent_dim = latent_dim;
    auto rng = stream_for(seed, prefix);
    const std::size_t in = channels + latent_dim;
    r.init_weight = params.add(prefix + ".init.weight", normal_tensor({in, 2}, std::sqrt(2.0 / double(in + 2)), rng));
    r.init_bias = params.add(prefix + ".init.bias", Tensor({1, 2}));
    r.out_weight =
        params.add(prefix + ".out.weight", normal_tensor({2, channels}, std::sqrt(2.0 / double(2 + channels)), rng));
    r.out_bias = params.add(prefix + ".out.bias", Tensor({1, channels}));
    return r;
}

PhysicsTrace physics_decode(const PhysicsDecoder& decoder, const Binding& bound, const Var& z_p, const Var& x0,
                            bool differentiable) {
    const PhaseReadout& r = decoder.readout;
    if (x0.value().cols() != r.channels || z_p.value().cols() != r.latent_dim)
        throw DimensionError("physics_decode: x0 " + shape_string(x0.shape()) + ", z_P " + shape_string(z_p.shape()));
    const std::array<Var, 2> init_in{x0, z_p};
    PhysicsTrace trace;
    trace.initial_state = affine(concat_lastdim(init_in), bound[r.init_weight], bound[r.init_bias]);

    EnergyFn energy = decoder.field.bind(bound);
    VectorField field = [&](const Var& y) { return hamiltonian_vector_field(energy, y, z_p, differentiable); };
    trace.states = rk4_integrate(field, trace.initial_state, decoder.grid);

    std::vector<Var> frames;
    frames.reserve(trace.states.size());
    for (const Var& s : trace.states) frames.push_back(affine(s, bound[r.out_weight], bound[r.out_bias]));
    trace.output = concat_lastdim(frames);
    return trace;
}

Tensor physics_decode_values(const PhysicsDecoder& decoder, const ParameterSet& params, const Tensor& z_p,
                             const Tensor& x0) {
    const PhaseReadout& r = decoder.readout;
    if (x0.cols() != r.channels || z_p.cols() != r.latent_dim || x0.rows() != z_p.rows())
        throw DimensionError("physics_decode_values: x0 " + shape_string(x0.shape()) + ", z_P " +
                             shape_string(z_p.shape()));
    decoder.grid.validate();
    const std::array<const Tensor*, 2> init_in{&x0, &z_p};
    Tensor y = affine(concat_lastdim(init_in), params.value(r.init_weight), params.value(r.init_bias));

    const Mlp& mlp = decoder.field.energy;
    auto field = [&](const Tensor& state) {
        Tape tape;
        Var s = tape.leaf(state, true);
        Var h = concat_lastdim(std::array<Var, 2>{s, tape.constant(z_p)});
        for (const auto& layer : mlp.layers)
            h = apply_activation(layer.activation, affine(h, tape.constant(params.value(layer.weight)),
                                                          tape.constant(params.value(layer.bias))));
        const std::array<Var, 1> wrt{s};
        const Tensor dh = tape.backward(h, Tensor(h.shape(), 1.0), wrt)[0];
        Tensor f(state.shape());
        for (std::size_t i = 0; i < f.rows(); ++i) {
            f.at(i, 0) = -dh.at(i, 1);
            f.at(i, 1) = dh.at(i, 0);
        }
        return f;
    };

    const double h = decoder.grid.step();
    const std::size_t n = y.rows(), m = r.channels;
    Tensor out({n, decoder.grid.points * m});
    auto emit = [&](std::size_t p, const Tensor& state) {
        const Tensor frame = affine(state, params.value(r.out_weight), params.value(r.out_bias));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < m; ++c) out.at(i, p * m + c) = frame.at(i, c);
    };
    emit(0, y);
    std::size_t step = 0;
    for (std::size_t p = 1; p < decoder.grid.points; ++p) {
        for (std::size_t s = 0; s < decoder.grid.substeps; ++s, ++step) {
            try {
                const Tensor k1 = field(y);
                const Tensor k2 = field(add(y, scale(k1, 0.5 * h)));
                const Tensor k3 = field(add(y, scale(k2, 0.5 * h)));
                const Tensor k4 = field(add(y, scale(k3, h)));
                y = add(y, scale(add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4)), h / 6.0));
            } catch (const NumericDomainError& e) {
                throw IntegrationError(step, e.what());
            }
            if (!y.all_finite()) throw IntegrationError(step, "non-finite state");
        }
        emit(p, y);
    }
    return out;
}

}  // namespace phyvae
