#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "attention_oracle.hpp"
#include "phyvae/attention.hpp"
#include "phyvae/errors.hpp"

using namespace phyvae;

namespace {

struct Fixture {
    ParameterSet params;
    AttentionParams att;
    Fixture(std::size_t d, std::uint64_t seed, double sd = 1.0) {
        att = AttentionParams::create(params, "att", d, seed, sd);
        std::mt19937_64 rng(seed + 100);
        for (ParamId id : {att.beta_q, att.beta_k, att.beta_v}) params.value(id) = normal_tensor({1, d}, sd, rng);
    }
    AttentionOutput run(Tape& tape, const Tensor& x) const {
        return self_attention(tape.constant(x), att, params.bind(tape));
    }
};

}  // namespace

TEST_CASE("a single input attends only to itself") {
    Fixture f(3, 1);
    Tape tape;
    const Tensor x = Tensor::matrix({{0.2, -0.4, 1.0}});
    const AttentionOutput o = f.run(tape, x);
    CHECK(o.weights.value()[0] == 1.0);
    const Tensor v = add(matmul_nt(x, f.params.value(f.att.omega_v)), f.params.value(f.att.beta_v));
    CHECK(max_abs_diff(o.output.value(), v) < 1e-15);
}

TEST_CASE("equal logits average the values uniformly") {
    Fixture f(2, 2);
    for (ParamId id : {f.att.omega_q, f.att.omega_k, f.att.beta_q, f.att.beta_k})
        f.params.value(id) = Tensor(f.params.value(id).shape());
    std::mt19937_64 rng(3);
    const Tensor x = normal_tensor({4, 2}, 1.0, rng);
    Tape tape;
    const AttentionOutput o = f.run(tape, x);
    const Tensor v = add(matmul_nt(x, f.params.value(f.att.omega_v)), f.params.value(f.att.beta_v));
    const Tensor avg = scale(sum_rows(v), 0.25);
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < 2; ++i) CHECK(o.output.value().at(n, i) == doctest::Approx(avg[i]).epsilon(1e-14));
}

TEST_CASE("matrix form equals the per-pair loop") {
    Fixture f(2, 4);
    std::mt19937_64 rng(5);
    const Tensor x = normal_tensor({3, 2}, 1.0, rng);
    Tape tape;
    CHECK(max_abs_diff(f.run(tape, x).output.value(), oracle::pairwise(f.params, f.att, x)) < 1e-12);
}

TEST_CASE("attention weights are a simplex per query") {
    Fixture f(4, 6);
    std::mt19937_64 rng(7);
    Tape tape;
    const Tensor w = f.run(tape, normal_tensor({9, 4}, 2.0, rng)).weights.value();
    for (std::size_t n = 0; n < 9; ++n) {
        double s = 0.0;
        for (std::size_t m = 0; m < 9; ++m) {
            CHECK(w.at(n, m) >= 0.0);
            s += w.at(n, m);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("permuting the batch permutes the output") {
    Fixture f(3, 8);
    std::mt19937_64 rng(9);
    const Tensor x = normal_tensor({5, 3}, 1.0, rng);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor xp({5, 3});
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 3; ++c) xp.at(r, c) = x.at(perm[r], c);
    Tape tape;
    const Tensor y = f.run(tape, x).output.value(), yp = f.run(tape, xp).output.value();
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(yp.at(r, c) - y.at(perm[r], c)) < 1e-12);
}

TEST_CASE("parameter shapes do not depend on the batch size") {
    Fixture f(3, 10);
    Tape tape;
    CHECK(f.run(tape, Tensor({2, 3})).output.shape() == Shape{2, 3});
    CHECK(f.run(tape, Tensor({7, 3})).output.shape() == Shape{7, 3});
    CHECK(f.params.value(f.att.omega_q).shape() == Shape{3, 3});
    CHECK_THROWS_AS(f.run(tape, Tensor({0, 3})), EmptyBatchError);
    CHECK_THROWS_AS(f.run(tape, Tensor({2, 4})), DimensionError);
}

TEST_CASE("attentive fusion arithmetic") {
    Tape tape;
    Var z = tape.constant(Tensor::row({1.0, 2.0}));
    CHECK(attentive_fuse(z, tape.constant(Tensor({1, 2}))).value() == z.value());
    CHECK(attentive_fuse(tape.constant(Tensor({1, 2})), z).value() == Tensor({1, 2}));
    CHECK(attentive_fuse(z, tape.constant(Tensor::row({0.5, -1.0}))).value() == Tensor::row({1.5, 0.0}));
}
