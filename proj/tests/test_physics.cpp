#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "phyvae/errors.hpp"
#include "phyvae/physics.hpp"

using namespace phyvae;

namespace {

// H = (p^2 + q^2) / 2 written directly on the tape.
Var harmonic_energy(const Var& state, const Var&) { return scale(sum_cols(square(state)), 0.5); }

IntegrationGrid grid_over(double t1, std::size_t steps) {
    IntegrationGrid g;
    g.t1 = t1;
    g.points = steps + 1;
    return g;
}

PhysicsDecoder small_decoder(ParameterSet& params, std::size_t channels, std::size_t dz, std::size_t points,
                             std::uint64_t seed) {
    PhysicsDecoder d;
    d.field = HamiltonianField::create(params, "energy", dz, 6, seed);
    d.readout = PhaseReadout::create(params, "readout", channels, dz, seed);
    d.grid.points = points;
    d.grid.substeps = 2;
    return d;
}

}  // namespace

TEST_CASE("harmonic energy yields the rotation field") {
    Tape tape;
    Var s = tape.leaf(Tensor::matrix({{0.3, -1.2}, {2.0, 0.5}}), true);  // (p, q)
    const Tensor f = hamiltonian_vector_field(harmonic_energy, s, tape.constant(Tensor({2, 1}))).value();
    CHECK(f == Tensor::matrix({{1.2, 0.3}, {-0.5, 2.0}}));  // (-q, p)
}

TEST_CASE("energy without q leaves p constant") {
    Tape tape;
    Var s = tape.leaf(Tensor::matrix({{0.7, 3.0}}), true);
    auto h = [](const Var& st, const Var&) { return square(slice_lastdim(st, 0, 1)); };
    const Tensor f = hamiltonian_vector_field(h, s, tape.constant(Tensor({1, 1}))).value();
    CHECK(f[0] == 0.0);
    CHECK(f[1] == doctest::Approx(1.4));
}

TEST_CASE("learned field matches finite differences of H") {
    ParameterSet params;
    const HamiltonianField hf = HamiltonianField::create(params, "h", 2, 8, 3);
    std::mt19937_64 rng(1);
    const Tensor state = normal_tensor({4, 2}, 1.0, rng), z = normal_tensor({4, 2}, 1.0, rng);
    Tape tape;
    const Binding b = params.bind(tape);
    const EnergyFn energy = hf.bind(b);
    const Tensor f = hamiltonian_vector_field(energy, tape.leaf(state, true), tape.constant(z)).value();
    for (std::size_t r = 0; r < 4; ++r) {
        auto h_at = [&](double p, double q) {
            Tape t;
            const Binding bb = params.bind(t);
            const Var zr = t.constant(Tensor({1, 2}, {z.at(r, 0), z.at(r, 1)}));
            return hf.bind(bb)(t.constant(Tensor::matrix({{p, q}})), zr).value()[0];
        };
        const double p = state.at(r, 0), q = state.at(r, 1), e = 1e-5;
        const double dhdp = (h_at(p + e, q) - h_at(p - e, q)) / (2 * e);
        const double dhdq = (h_at(p, q + e) - h_at(p, q - e)) / (2 * e);
        CHECK(f.at(r, 0) == doctest::Approx(-dhdq).epsilon(1e-6));
        CHECK(f.at(r, 1) == doctest::Approx(dhdp).epsilon(1e-6));
    }
}

TEST_CASE("zero field keeps the state constant") {
    Tape tape;
    Var y0 = tape.constant(Tensor::matrix({{1.5, -0.5}}));
    const auto states = rk4_integrate([&](const Var& y) { return scale(y, 0.0); }, y0, grid_over(1.0, 10));
    REQUIRE(states.size() == 11);
    for (const Var& s : states) CHECK(s.value() == y0.value());
}

TEST_CASE("one oscillator period returns to the start") {
    Tape tape;
    Var y0 = tape.constant(Tensor::matrix({{0.0, 1.0}}));
    const Var zero = tape.constant(Tensor({1, 1}));
    const auto states = rk4_integrate([&](const Var& y) { return hamiltonian_vector_field(harmonic_energy, y, zero); },
                                      y0, grid_over(2.0 * M_PI, 100));
    const Tensor& end = states.back().value();
    CHECK(std::abs(end[0] - 0.0) < 1e-5);
    CHECK(std::abs(end[1] - 1.0) < 1e-5);
    double drift = 0.0;
    for (const Var& s : states) {
        const Tensor& v = s.value();
        drift = std::max(drift, std::abs(0.5 * (v[0] * v[0] + v[1] * v[1]) - 0.5));
    }
    CHECK(drift < 1e-6);
    // Midway through the closed-form rotation (p, q) = (-sin t, cos t).
    const Tensor& mid = states[25].value();
    CHECK(std::abs(mid[0] + 1.0) < 1e-6);
    CHECK(std::abs(mid[1]) < 1e-6);
}

TEST_CASE("exponential growth reaches e") {
    Tape tape;
    const auto states = rk4_integrate([](const Var& y) { return y; }, tape.constant(Tensor::scalar(1.0)),
                                      grid_over(1.0, 100));
    CHECK(std::abs(states.back().value()[0] - std::exp(1.0)) < 1e-8);
}

TEST_CASE("halving the step divides the error by about sixteen") {
    auto error = [](std::size_t steps) {
        Tape tape;
        const auto states = rk4_integrate([](const Var& y) { return y; }, tape.constant(Tensor::scalar(1.0)),
                                          grid_over(1.0, steps));
        return std::abs(states.back().value()[0] - std::exp(1.0));
    };
    const double ratio = error(8) / error(16);
    CHECK(ratio >= 12.0);
    CHECK(ratio <= 20.0);
}

TEST_CASE("non-finite stages raise IntegrationError") {
    Tape tape;
    auto blowup = [](const Var& y) { return exp(exp(scale(y, 50.0))); };
    CHECK_THROWS_AS(rk4_integrate(blowup, tape.constant(Tensor::scalar(1.0)), grid_over(1.0, 10)), IntegrationError);
}

TEST_CASE("invalid grids are rejected") {
    IntegrationGrid g;
    g.points = 1;
    CHECK_THROWS(g.validate());
    g = IntegrationGrid{};
    g.t1 = g.t0;
    CHECK_THROWS(g.validate());
}

TEST_CASE("zero readout repeats the bias") {
    ParameterSet params;
    const PhysicsDecoder d = small_decoder(params, 3, 2, 5, 1);
    params.value(d.readout.out_weight) = Tensor({2, 3});
    params.value(d.readout.out_bias) = Tensor::row({0.5, -1.0, 2.0});
    Tape tape;
    const Binding b = params.bind(tape);
    const Tensor out =
        physics_decode(d, b, tape.constant(Tensor::matrix({{0.1, 0.2}})), tape.constant(Tensor::matrix({{1, 2, 3}})))
            .output.value();
    REQUIRE(out.shape() == Shape{1, 15});
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(out[t * 3 + 0] == 0.5);
        CHECK(out[t * 3 + 1] == -1.0);
        CHECK(out[t * 3 + 2] == 2.0);
    }
}

TEST_CASE("harmonic trajectory through an affine readout gives sinusoids") {
    // Readout rows: channel 0 = q, channel 1 = p, channel 2 = 2q - p + 1.
    Tape tape;
    const Var zero = tape.constant(Tensor({1, 1}));
    const auto states = rk4_integrate([&](const Var& y) { return hamiltonian_vector_field(harmonic_energy, y, zero); },
                                      tape.constant(Tensor::matrix({{0.0, 1.0}})), grid_over(1.0, 200));
    const Var w = tape.constant(Tensor::matrix({{0, 1, -1}, {1, 0, 2}}));
    const Var bias = tape.constant(Tensor::row({0, 0, 1}));
    for (std::size_t k = 0; k < states.size(); k += 20) {
        const double t = static_cast<double>(k) / 200.0;
        const Tensor y = affine(states[k], w, bias).value();
        CHECK(std::abs(y[0] - std::cos(t)) < 1e-9);
        CHECK(std::abs(y[1] + std::sin(t)) < 1e-9);
        CHECK(std::abs(y[2] - (2 * std::cos(t) + std::sin(t) + 1)) < 1e-9);
    }
}

TEST_CASE("gradients through RK4 and the energy net match finite differences") {
    ParameterSet params;
    const PhysicsDecoder d = small_decoder(params, 3, 2, 4, 5);
    std::mt19937_64 rng(2);
    const Tensor z = normal_tensor({2, 2}, 1.0, rng), x0 = normal_tensor({2, 3}, 1.0, rng);
    auto build = [&](Tape& t, const Binding& b) {
        return sum(square(physics_decode(d, b, t.constant(z), t.constant(x0)).output));
    };
    Tape tape;
    const Binding bound = params.bind(tape);
    const auto grads = tape.backward(build(tape, bound), Tensor::scalar(1.0), bound.vars());
    for (std::size_t i = 0; i < params.size(); ++i) {
        CAPTURE(params.path(i));
        const Tensor fd = oracle::finite_difference(params.value(i), [&] {
            Tape t;
            const Binding b = params.bind(t);
            return build(t, b).value().item();
        });
        CHECK(oracle::relative_error(grads[i], fd) < 1e-3);
    }
}

TEST_CASE("value-path decoding equals the recorded path") {
    ParameterSet params;
    const PhysicsDecoder d = small_decoder(params, 3, 2, 6, 9);
    std::mt19937_64 rng(4);
    const Tensor z = normal_tensor({3, 2}, 1.0, rng), x0 = normal_tensor({3, 3}, 1.0, rng);
    Tape tape;
    const Binding b = params.bind(tape);
    const Tensor recorded = physics_decode(d, b, tape.constant(z), tape.constant(x0)).output.value();
    CHECK(max_abs_diff(recorded, physics_decode_values(d, params, z, x0)) < 1e-13);
}
