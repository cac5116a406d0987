#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "phyvae/errors.hpp"
#include "phyvae/model.hpp"
#include "toy.hpp"

using namespace phyvae;

namespace {

bool has_prefix(const ParameterSet& p, const std::string& prefix) {
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p.path(i).rfind(prefix, 0) == 0) return true;
    return false;
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
    return {t.data().begin() + static_cast<std::ptrdiff_t>(r * t.cols()),
            t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols())};
}

}  // namespace

TEST_CASE("variant names round-trip") {
    for (Variant v : kAllVariants) CHECK(parse_variant(variant_name(v)) == v);
    CHECK_THROWS_AS(parse_variant("VAE"), std::invalid_argument);
}

TEST_CASE("variants build exactly their branches") {
    const auto ord = HybridModel(toy::config(Variant::ord_vae), 0);
    CHECK_FALSE(has_prefix(ord.params(), "phys."));
    CHECK_FALSE(has_prefix(ord.params(), "aux.flows"));
    const auto phy = HybridModel(toy::config(Variant::phy_vae), 0);
    CHECK_FALSE(has_prefix(phy.params(), "aux."));
    CHECK(phy.phys().trunk.in_dim() == 24);
    const auto nf = HybridModel(toy::config(Variant::nf_phy_r), 0);
    CHECK(has_prefix(nf.params(), "aux.flows"));
    CHECK(has_prefix(nf.params(), "phys.flows"));
    CHECK_FALSE(has_prefix(nf.params(), "phys.attention"));
    CHECK(nf.phys().trunk.in_dim() == 27);
    const auto att = HybridModel(toy::config(Variant::att_nf_phy_r), 0);
    CHECK(has_prefix(att.params(), "aux.attention"));
    CHECK(has_prefix(att.params(), "phys.attention"));
    CHECK_THROWS(HybridModel(toy::config(Posterior::none, Posterior::none), 0));
}

TEST_CASE("grid and data length must agree") {
    ModelConfig c = toy::config(Variant::nf_phy_r);
    c.grid.points = 9;
    CHECK_THROWS_AS(HybridModel(c, 0), DimensionError);
}

TEST_CASE("tiny variance collapses the draw onto the mean") {
    Tape tape;
    Var m = tape.constant(Tensor::row({0.5, -2.0}));
    Var v = tape.constant(Tensor::row({1e-300, 1e-300}));
    const Tensor z = reparam_sample(m, v, Tensor::row({3.0, -3.0})).value();
    CHECK(std::abs(z[0] - 0.5) < 1e-140);
    CHECK(std::abs(z[1] + 2.0) < 1e-140);
    CHECK_THROWS_AS(reparam_sample(m, tape.constant(Tensor::row({1.0, 0.0})), Tensor::row({0, 0})),
                    NumericDomainError);
}

TEST_CASE("standard draws have unit moments") {
    std::mt19937_64 rng(1);
    const std::size_t n = 100000;
    Tape tape;
    const Tensor z =
        reparam_sample(tape.constant(Tensor({n, 1})), tape.constant(Tensor({n, 1}, 1.0)), standard_normal({n, 1}, rng))
            .value();
    double s = 0.0, s2 = 0.0;
    for (double v : z.data()) {
        s += v;
        s2 += v * v;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("draws move one for one with the mean") {
    Tape tape;
    Var m = tape.leaf(Tensor::row({0.1, 0.2, 0.3}), true);
    Var v = tape.leaf(Tensor::row({0.5, 2.0, 1.0}), true);
    Var z = reparam_sample(m, v, Tensor::row({0.7, -1.1, 0.4}));
    const std::array<Var, 1> wrt{m};
    CHECK(tape.backward(sum(z), Tensor::scalar(1.0), wrt)[0] == Tensor::row({1, 1, 1}));
}

TEST_CASE("Gaussian log density") {
    Tape tape;
    auto lp = [&](Tensor x, Tensor m, Tensor v) {
        return gaussian_log_pdf(tape.constant(x), tape.constant(m), tape.constant(v)).value()[0];
    };
    CHECK(lp(Tensor::row({0.4}), Tensor::row({0.4}), Tensor::row({1.0})) ==
          doctest::Approx(-0.91893853320467274).epsilon(1e-15));
    CHECK(lp(Tensor::row({1, 2}), Tensor::row({1, 2}), Tensor::row({1, 1})) ==
          doctest::Approx(-1.8378770664093453).epsilon(1e-15));

    std::mt19937_64 rng(8);
    const Tensor x = normal_tensor({5, 4}, 1.0, rng), m = normal_tensor({5, 4}, 1.0, rng);
    Tensor v = normal_tensor({5, 4}, 1.0, rng);
    for (double& e : v.data()) e = 0.2 + e * e;
    const Tensor got = gaussian_log_pdf(tape.constant(x), tape.constant(m), tape.constant(v)).value();
    for (std::size_t r = 0; r < 5; ++r)
        CHECK(std::abs(got[r] - oracle::gaussian_log_pdf(row_of(x, r), row_of(m, r), row_of(v, r))) < 1e-12);
    const Tensor std_lp = standard_normal_log_pdf(tape.constant(x)).value();
    for (std::size_t r = 0; r < 5; ++r)
        CHECK(std::abs(std_lp[r] - oracle::gaussian_log_pdf(row_of(x, r), {0, 0, 0, 0}, {1, 1, 1, 1})) < 1e-12);
}

TEST_CASE("Gaussian posterior without flows or attention") {
    const HybridModel model(toy::config(Posterior::gaussian, Posterior::gaussian), 3);
    const Tensor x = toy::batch(4, model.config(), 1);
    Tape tape;
    const Binding b = model.params().bind(tape);
    std::mt19937_64 rng(2);
    ForwardOptions opts;
    opts.sample_rng = &rng;
    const LatentDraw d = encode_aux(model, b, tape.constant(x), opts);
    CHECK(d.z.value() == d.z0.value());
    CHECK(d.z_flow.value() == d.z0.value());
    CHECK(d.log_q.value() == gaussian_log_pdf(d.z0, d.mean, d.var).value());
    const LatentDraw p = encode_phys(model, b, tape.constant(x), d.mean, opts);
    CHECK(p.z.shape() == Shape{4, 2});
    CHECK(p.log_q.value() == gaussian_log_pdf(p.z0, p.mean, p.var).value());
}

TEST_CASE("repeated rows get identical posteriors") {
    const HybridModel model(toy::config(Variant::nf_phy_r), 4);
    const Tensor one = toy::batch(1, model.config(), 5);
    Tensor x({3, one.cols()});
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < one.cols(); ++c) x.at(r, c) = one[c];
    Tape tape;
    const Binding b = model.params().bind(tape);
    const LatentDraw d = encode_aux(model, b, tape.constant(x), {});
    for (std::size_t r = 1; r < 3; ++r) {
        CHECK(row_of(d.mean.value(), r) == row_of(d.mean.value(), 0));
        CHECK(row_of(d.var.value(), r) == row_of(d.var.value(), 0));
    }
}

TEST_CASE("stored log q equals its recomputation") {
    for (Variant v : {Variant::nf_phy_r, Variant::att_nf_phy_r}) {
        const HybridModel model(toy::config(v), 6);
        const Tensor x = toy::batch(5, model.config(), 7);
        Tape tape;
        const Binding b = model.params().bind(tape);
        std::mt19937_64 rng(3);
        ForwardOptions opts;
        opts.sample_rng = &rng;
        const LatentDraw a = encode_aux(model, b, tape.constant(x), opts);
        const LatentDraw p = encode_phys(model, b, tape.constant(x), a.mean, opts);
        for (const LatentDraw* d : {&a, &p})
            for (std::size_t r = 0; r < 5; ++r) {
                const double expect = oracle::gaussian_log_pdf(row_of(d->z0.value(), r), row_of(d->mean.value(), r),
                                                               row_of(d->var.value(), r)) -
                                      d->log_det.value()[r];
                CHECK(std::abs(d->log_q.value()[r] - expect) < 1e-12);
            }
    }
}

TEST_CASE("mixing appends the auxiliary mean") {
    Tape tape;
    Var x = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    const Tensor mixed = mix_input(x, tape.constant(Tensor({2, 3}))).value();
    CHECK(mixed == Tensor::matrix({{1, 2, 0, 0, 0}, {3, 4, 0, 0, 0}}));
    CHECK(mix_input(x, Var()).value() == x.value());
}

TEST_CASE("zero auxiliary decoder leaves physics plus its bias") {
    HybridModel model(toy::config(Variant::ord_phy_r), 8);
    const Mlp& dec = model.aux_decoder();
    for (const auto& layer : dec.layers) model.params().value(layer.weight) = Tensor(model.params().value(layer.weight).shape());
    Tensor& last_bias = model.params().value(dec.layers.back().bias);
    for (std::size_t i = 0; i < last_bias.numel(); ++i) last_bias[i] = 0.01 * static_cast<double>(i);
    Tape tape;
    const Binding b = model.params().bind(tape);
    std::mt19937_64 rng(1);
    const Tensor zp = normal_tensor({2, 2}, 1.0, rng), za = normal_tensor({2, 3}, 1.0, rng);
    const Tensor x0 = normal_tensor({2, 3}, 1.0, rng);
    const Decoded d = decode(model, b, tape.constant(zp), tape.constant(za), tape.constant(x0));
    CHECK(d.x_hat.value() == add(d.f_p.value(), last_bias));
}

TEST_CASE("decoder branches combine additively") {
    const HybridModel model(toy::config(Variant::nf_phy_r), 9);
    Tape tape;
    const Binding b = model.params().bind(tape);
    std::mt19937_64 rng(2);
    Var zp = tape.constant(normal_tensor({2, 2}, 1.0, rng)), za = tape.constant(normal_tensor({2, 3}, 1.0, rng));
    Var x0 = tape.constant(normal_tensor({2, 3}, 1.0, rng));
    const Decoded d = decode(model, b, zp, za, x0);
    const Tensor phys_only = physics_decode(model.physics(), b, zp, x0).output.value();
    CHECK(d.f_p.value() == phys_only);
    CHECK(max_abs_diff(sub(d.x_hat.value(), phys_only), d.f_a.value()) < 1e-14);
    CHECK(d.f_a.value() == mlp_forward(model.aux_decoder(), b, za).value());
}

TEST_CASE("OrdVAE decodes without a physics term") {
    const HybridModel model(toy::config(Variant::ord_vae), 1);
    Tape tape;
    const Binding b = model.params().bind(tape);
    Var za = tape.constant(Tensor({2, 3}, 0.3));
    const Decoded d = decode(model, b, Var(), za, tape.constant(Tensor({2, 3})));
    CHECK(d.f_p.tape() == nullptr);
    CHECK(d.x_hat.value() == d.f_a.value());
    CHECK_THROWS(decode(model, b, za, za, tape.constant(Tensor({2, 3}))));
}

TEST_CASE("perfect reconstruction log-likelihood") {
    Tape tape;
    Var x = tape.constant(Tensor({1, 300}, 0.7));
    CHECK(reconstruction_log_likelihood(x, x, 1.0).value()[0] == doctest::Approx(-275.68156).epsilon(1e-7));
    CHECK_THROWS_AS(reconstruction_log_likelihood(x, x, 0.0), NumericDomainError);
}

TEST_CASE("posterior equal to the prior has zero KL") {
    Tape tape;
    std::mt19937_64 rng(4);
    LatentDraw d;
    d.mean = tape.constant(Tensor({50, 3}));
    d.var = tape.constant(Tensor({50, 3}, 1.0));
    d.z0 = d.z_flow = d.z = reparam_sample(d.mean, d.var, standard_normal({50, 3}, rng));
    d.log_det = tape.constant(Tensor({50, 1}));
    d.log_q = flow_log_density(gaussian_log_pdf(d.z0, d.mean, d.var), d.log_det);
    for (double v : kl_single_draw(d).value().data()) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("single-draw KL averages to the closed form") {
    const std::vector<double> m{0.5, -1.0}, v{0.3, 2.0};
    const std::size_t n = 200000;
    Tape tape;
    std::mt19937_64 rng(5);
    LatentDraw d;
    d.mean = tape.constant(broadcast_rows(Tensor({1, 2}, m), n));
    d.var = tape.constant(broadcast_rows(Tensor({1, 2}, v), n));
    d.z0 = d.z_flow = d.z = reparam_sample(d.mean, d.var, standard_normal({n, 2}, rng));
    d.log_q = gaussian_log_pdf(d.z0, d.mean, d.var);
    double s = 0.0, s2 = 0.0;
    for (double k : kl_single_draw(d).value().data()) {
        s += k;
        s2 += k * k;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean - oracle::gaussian_kl(m, v)) < 3.0 * se);
}

TEST_CASE("physics-fit regularizer") {
    Tape tape;
    Var x = tape.constant(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
    CHECK(regularizer_t1(x, x).value()[0] == 0.0);
    const Tensor fp = Tensor::matrix({{0.5, 2.5, 3}, {4, 7, 5.5}});
    double s = 0.0;
    for (std::size_t i = 0; i < 6; ++i) s += (x.value()[i] - fp[i]) * (x.value()[i] - fp[i]);
    CHECK(regularizer_t1(x, tape.constant(fp)).value()[0] == doctest::Approx(s / 6.0).epsilon(1e-15));
}

TEST_CASE("latent regularizer vanishes at its fixed point") {
    const HybridModel model(toy::config(Variant::nf_phy_r), 10);
    Tape tape;
    const Binding b = model.params().bind(tape);
    const Var fp = tape.constant(toy::batch(3, model.config(), 2));
    const Var re = mlp_forward(model.phys().mean_head, b,
                               mlp_forward(model.phys().trunk, b, mix_input(fp, tape.constant(Tensor({3, 3})))));
    LatentDraw d;
    d.mean = tape.constant(re.value());
    CHECK(regularizer_t2(model, b, d, fp).value()[0] == 0.0);
    d.mean = tape.constant(add_scalar(re.value(), 0.5));
    CHECK(regularizer_t2(model, b, d, fp).value()[0] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("loss breakdown arithmetic") {
    for (Variant v : kAllVariants) {
        CAPTURE(variant_name(v));
        const HybridModel model(toy::config(v), 11);
        const Tensor x = toy::batch(3, model.config(), 3);
        Tape tape;
        const Binding b = model.params().bind(tape);
        std::mt19937_64 rng(9);
        ForwardOptions opts;
        opts.sample_rng = &rng;
        const LossBreakdown l = total_loss(model, b, tape.constant(x), 0.3, 0.7, opts).breakdown;
        CHECK(std::abs(l.elbo - (l.recon_term - l.kl_phys - l.kl_aux)) < 1e-12);
        CHECK(std::abs(l.total - (-l.elbo + 0.3 * l.r_t1 + 0.7 * l.r_t2)) < 1e-12);

        Tape t2;
        const Binding b2 = model.params().bind(t2);
        std::mt19937_64 rng2(9);
        opts.sample_rng = &rng2;
        const LossBreakdown z = total_loss(model, b2, t2.constant(x), 0.0, 0.0, opts).breakdown;
        CHECK(z.total == -z.elbo);
        CHECK(z.elbo == l.elbo);
    }
}

TEST_CASE("loss gradients match finite differences on a toy model") {
    for (const auto& g : toy::gradient_check(toy::config(Variant::att_nf_phy_r), 21, 0.5, 0.5)) {
        CAPTURE(g.path);
        CHECK(g.error < g.tolerance);
    }
}

TEST_CASE("feature noise zeroes the trunk output") {
    const HybridModel model(toy::config(Variant::ord_vae), 12);
    Tape tape;
    const Binding b = model.params().bind(tape);
    const NoiseSpec all{100.0, 100.0};
    std::mt19937_64 rng(1);
    ForwardOptions opts;
    opts.noise = &all;
    opts.noise_rng = &rng;
    const LatentDraw d = encode_aux(model, b, tape.constant(toy::batch(2, model.config(), 1)), opts);
    CHECK(d.features.value() == Tensor({2, 6}));
    opts.noise_rng = nullptr;
    CHECK_THROWS(encode_aux(model, b, tape.constant(toy::batch(2, model.config(), 1)), opts));
}

TEST_CASE("reconstruction uses posterior means") {
    for (Variant v : kAllVariants) {
        CAPTURE(variant_name(v));
        const HybridModel model(toy::config(v), 13);
        const Tensor x = toy::batch(3, model.config(), 4);
        Tape tape;
        const Binding b = model.params().bind(tape);
        const ForwardPass fp = total_loss(model, b, tape.constant(x), 0.0, 0.0, {});
        CHECK(max_abs_diff(reconstruct(model, x), fp.decoded.x_hat.value()) < 1e-12);
    }
}
