#include "phyvae/model.hpp"

#include <array>
#include <cmath>

#include "phyvae/errors.hpp"

namespace phyvae {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

bool present(const Var& v) { return v.tape() != nullptr; }

std::vector<std::size_t> chain_widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
}

LatentEncoder make_encoder(ParameterSet& params, const std::string& prefix, Posterior family, std::size_t input,
                           const std::vector<std::size_t>& feature, const std::vector<std::size_t>& head,
                           std::size_t dim, std::size_t flows, double init_stddev, std::uint64_t seed) {
    LatentEncoder e;
    e.family = family;
    e.dim = dim;
    if (family == Posterior::none) return e;
    if (feature.empty()) throw DimensionError(prefix + ": feature extractor needs at least one layer");
    std::vector<std::size_t> trunk{input};
    trunk.insert(trunk.end(), feature.begin(), feature.end());
    e.trunk = Mlp::create(params, prefix + ".feature", trunk, seed, Activation::tanh, Activation::tanh);
    e.mean_head = Mlp::create(params, prefix + ".mean", chain_widths(feature.back(), head, dim), seed);
    e.logvar_head = Mlp::create(params, prefix + ".logvar", chain_widths(feature.back(), head, dim), seed);
    if (family == Posterior::flow || family == Posterior::attentive_flow)
        e.chain = FlowChain::create(params, prefix + ".flows", dim, flows, seed, init_stddev);
    if (family == Posterior::attentive_flow)
        e.attention = AttentionParams::create(params, prefix + ".attention", dim, seed, init_stddev);
    return e;
}

LatentDraw encode_branch(const LatentEncoder& enc, const Binding& bound, const Var& input,
                         const ForwardOptions& opts) {
    Tape& tape = *input.tape();
    LatentDraw d;
    d.features = mlp_forward(enc.trunk, bound, input);
    if (opts.noise) {
        if (!opts.noise_rng) throw std::invalid_argument("feature noise requested without a noise generator");
        const NoiseMask m =
            sample_noise_mask(d.features.value().rows(), d.features.value().cols(), *opts.noise, *opts.noise_rng);
        if (!m.noop) d.features = mul(d.features, tape.constant(m.mask));
    }
    d.mean = mlp_forward(enc.mean_head, bound, d.features);
    d.var = exp(mlp_forward(enc.logvar_head, bound, d.features));
    const Tensor eps = opts.sample_rng ? standard_normal(d.mean.shape(), *opts.sample_rng) : Tensor(d.mean.shape());
    d.z0 = reparam_sample(d.mean, d.var, eps);
    const Var log_q0 = gaussian_log_pdf(d.z0, d.mean, d.var);
    if (enc.chain.length() > 0) {
        FlowStep step = chain_forward(d.z0, enc.chain, bound);
        d.z_flow = step.z;
        d.log_det = step.log_det;
    } else {
        d.z_flow = d.z0;
        d.log_det = tape.constant(Tensor({d.z0.value().rows(), 1}));
    }
    d.log_q = flow_log_density(log_q0, d.log_det);
    d.z = enc.attention ? attentive_fuse(d.z_flow, self_attention(d.z_flow, *enc.attention, bound).output)
                        : d.z_flow;
    return d;
}

}  // namespace

std::string_view posterior_name(Posterior p) {
    switch (p) {
        case Posterior::none: return "none";
        case Posterior::gaussian: return "gaussian";
        case Posterior::flow: return "flow";
        case Posterior::attentive_flow: return "attentive_flow";
    }
    return "?";
}

Posterior parse_posterior(std::string_view name) {
    for (Posterior p : {Posterior::none, Posterior::gaussian, Posterior::flow, Posterior::attentive_flow})
        if (posterior_name(p) == name) return p;
    throw std::invalid_argument("unknown posterior family '" + std::string(name) + "'");
}

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::ord_vae: return "OrdVAE";
        case Variant::phy_vae: return "PhyVAE";
        case Variant::ord_phy_r: return "OrdPhyR";
        case Variant::nf_phy_r: return "NFPhyR";
        case Variant::att_nf_phy_r: return "AttNFPhyR";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : kAllVariants)
        if (variant_name(v) == name) return v;
    throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (channels == 0 || time_points < 2) throw DimensionError("model needs channels >= 1 and time_points >= 2");
    if (!has_aux() && !has_phys()) throw std::invalid_argument("model needs at least one latent branch");
    if (grid.points != time_points)
        throw DimensionError("integration grid has " + std::to_string(grid.points) + " points, data has " +
                             std::to_string(time_points));
    grid.validate();
    if (!(noise_variance > 0.0)) throw NumericDomainError("observation noise variance must be positive");
    if (aux_latent == 0 || phys_latent == 0) throw DimensionError("latent dimensions must be positive");
}

ModelConfig variant_config(Variant v, ModelConfig base) {
    switch (v) {
        case Variant::ord_vae:
            base.aux_posterior = Posterior::gaussian;
            base.phys_posterior = Posterior::none;
            break;
        case Variant::phy_vae:
            base.aux_posterior = Posterior::none;
            base.phys_posterior = Posterior::gaussian;
            break;
        case Variant::ord_phy_r:
            base.aux_posterior = base.phys_posterior = Posterior::gaussian;
            break;
        case Variant::nf_phy_r:
            base.aux_posterior = base.phys_posterior = Posterior::flow;
            break;
        case Variant::att_nf_phy_r:
            base.aux_posterior = base.phys_posterior = Posterior::attentive_flow;
            break;
    }
    return base;
}

HybridModel::HybridModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const std::size_t d = config_.input_width();
    aux_ = make_encoder(params_, "aux", config_.aux_posterior, d, config_.aux_feature, config_.aux_head,
                        config_.aux_latent, config_.aux_flows, config_.latent_init_stddev, seed);
    const std::size_t phys_in = d + (config_.has_aux() ? config_.aux_latent : 0);
    phys_ = make_encoder(params_, "phys", config_.phys_posterior, phys_in, config_.phys_feature, config_.phys_head,
                         config_.phys_latent, config_.phys_flows, config_.latent_init_stddev, seed);
    if (config_.has_aux())
        aux_decoder_ = Mlp::create(params_, "aux.decoder", chain_widths(config_.aux_latent, config_.aux_decoder, d),
                                   seed);
    if (config_.has_phys()) {
        physics_.field = HamiltonianField::create(params_, "phys.decoder.energy", config_.phys_latent,
                                                  config_.hamiltonian_hidden, seed);
        physics_.readout =
            PhaseReadout::create(params_, "phys.decoder.readout", config_.channels, config_.phys_latent, seed);
        physics_.grid = config_.grid;
    }
}

Tensor standard_normal(const Shape& shape, std::mt19937_64& rng) { return normal_tensor(shape, 1.0, rng); }

Var reparam_sample(const Var& mean, const Var& var, const Tensor& eps) {
    if (mean.shape() != var.shape() || mean.shape() != eps.shape())
        throw DimensionError("reparam_sample: mean " + shape_string(mean.shape()) + ", var " +
                             shape_string(var.shape()) + ", eps " + shape_string(eps.shape()));
    for (double v : var.value().data())
        if (!(v > 0.0)) throw NumericDomainError("reparam_sample: nonpositive variance");
    Tape& tape = *mean.tape();
    return add(mean, mul(exp(scale(log(var), 0.5)), tape.constant(eps)));
}

Var gaussian_log_pdf(const Var& x, const Var& mean, const Var& var) {
    if (x.shape() != mean.shape() || x.shape() != var.shape())
        throw DimensionError("gaussian_log_pdf: x " + shape_string(x.shape()) + ", mean " +
                             shape_string(mean.shape()) + ", var " + shape_string(var.shape()));
    for (double v : var.value().data())
        if (!(v > 0.0)) throw NumericDomainError("gaussian_log_pdf: nonpositive variance");
    Var quad = div(square(sub(x, mean)), var);
    Var per_dim = add_scalar(add(log(var), quad), kLog2Pi);
    return scale(sum_cols(per_dim), -0.5);
}

Var standard_normal_log_pdf(const Var& x) {
    Var per_dim = add_scalar(square(x), kLog2Pi);
    return scale(sum_cols(per_dim), -0.5);
}

Var mix_input(const Var& x, const Var& m_aux) {
    if (!present(m_aux)) return x;
    if (m_aux.value().rows() != x.value().rows()) throw DimensionError("mix_input: batch sizes differ");
    const std::array<Var, 2> parts{x, m_aux};
    return concat_lastdim(parts);
}

LatentDraw encode_aux(const HybridModel& model, const Binding& bound, const Var& x, const ForwardOptions& opts) {
    if (!model.config().has_aux()) throw std::logic_error("encode_aux on a model without an auxiliary branch");
    if (x.value().cols() != model.config().input_width())
        throw DimensionError("encode_aux: input width " + std::to_string(x.value().cols()) + ", expected " +
                             std::to_string(model.config().input_width()));
    return encode_branch(model.aux(), bound, x, opts);
}

LatentDraw encode_phys(const HybridModel& model, const Binding& bound, const Var& x, const Var& m_aux,
                       const ForwardOptions& opts) {
    if (!model.config().has_phys()) throw std::logic_error("encode_phys on a model without a physics branch");
    if (model.config().has_aux() != present(m_aux))
        throw std::invalid_argument("encode_phys: m_aux must be given exactly when the auxiliary branch exists");
    return encode_branch(model.phys(), bound, mix_input(x, m_aux), opts);
}

Var initial_frame(const Var& x, std::size_t channels) { return slice_lastdim(x, 0, channels); }

Decoded decode(const HybridModel& model, const Binding& bound, const Var& z_p, const Var& z_aux, const Var& x0,
               bool differentiable_physics) {
    const ModelConfig& cfg = model.config();
    if (cfg.has_phys() != present(z_p) || cfg.has_aux() != present(z_aux))
        throw std::invalid_argument("decode: latents do not match the model's branches");
    Decoded d;
    if (present(z_aux)) d.f_a = mlp_forward(model.aux_decoder(), bound, z_aux);
    if (present(z_p)) d.f_p = physics_decode(model.physics(), bound, z_p, x0, differentiable_physics).output;
    if (present(d.f_p) && present(d.f_a))
        d.x_hat = add(d.f_p, d.f_a);
    else
        d.x_hat = present(d.f_p) ? d.f_p : d.f_a;
    return d;
}

Var reconstruction_log_likelihood(const Var& x, const Var& x_hat, double noise_variance) {
    if (!(noise_variance > 0.0)) throw NumericDomainError("observation noise variance must be positive");
    if (x.shape() != x_hat.shape())
        throw DimensionError("reconstruction: x " + shape_string(x.shape()) + ", x_hat " + shape_string(x_hat.shape()));
    const double width = static_cast<double>(x.value().cols());
    Var sq = sum_cols(square(sub(x, x_hat)));
    return add_scalar(scale(sq, -0.5 / noise_variance), -0.5 * width * (kLog2Pi + std::log(noise_variance)));
}

Var kl_single_draw(const LatentDraw& draw) { return sub(draw.log_q, standard_normal_log_pdf(draw.z_flow)); }

Var regularizer_t1(const Var& x, const Var& f_p) {
    if (x.shape() != f_p.shape()) throw DimensionError("regularizer_t1: shape mismatch");
    return mean(square(sub(x, f_p)));
}

Var regularizer_t2(const HybridModel& model, const Binding& bound, const LatentDraw& phys, const Var& f_p) {
    const ModelConfig& cfg = model.config();
    Tape& tape = *f_p.tape();
    Var input = f_p;
    if (cfg.has_aux()) input = mix_input(f_p, tape.constant(Tensor({f_p.value().rows(), cfg.aux_latent})));
    const LatentEncoder& enc = model.phys();
    Var m_re = mlp_forward(enc.mean_head, bound, mlp_forward(enc.trunk, bound, input));
    return mean(square(sub(m_re, detach(phys.mean))));
}

ForwardPass total_loss(const HybridModel& model, const Binding& bound, const Var& x, double alpha, double beta,
                       const ForwardOptions& opts) {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("alpha and beta must be nonnegative");
    const ModelConfig& cfg = model.config();
    if (x.value().rows() == 0) throw EmptyBatchError("total_loss on an empty batch");
    ForwardPass fp;
    if (cfg.has_aux()) fp.aux = encode_aux(model, bound, x, opts);
    if (cfg.has_phys()) fp.phys = encode_phys(model, bound, x, fp.aux.mean, opts);
    fp.decoded = decode(model, bound, fp.phys.z, fp.aux.z, initial_frame(x, cfg.channels), opts.differentiable_physics);

    LossTerms& t = fp.terms;
    t.recon = reconstruction_log_likelihood(x, fp.decoded.x_hat, cfg.noise_variance);
    Var elbo_rows = t.recon;
    if (cfg.has_phys()) {
        t.kl_phys = kl_single_draw(fp.phys);
        elbo_rows = sub(elbo_rows, t.kl_phys);
    }
    if (cfg.has_aux()) {
        t.kl_aux = kl_single_draw(fp.aux);
        elbo_rows = sub(elbo_rows, t.kl_aux);
    }
    t.elbo = mean(elbo_rows);
    t.total = neg(t.elbo);
    if (cfg.has_phys()) {
        t.r_t1 = regularizer_t1(x, fp.decoded.f_p);
        t.r_t2 = regularizer_t2(model, bound, fp.phys, fp.decoded.f_p);
        t.total = add(add(t.total, scale(t.r_t1, alpha)), scale(t.r_t2, beta));
    }

    LossBreakdown& b = fp.breakdown;
    b.elbo = t.elbo.value().item();
    b.recon_term = mean(t.recon).value().item();
    if (cfg.has_phys()) {
        b.kl_phys = mean(t.kl_phys).value().item();
        b.r_t1 = t.r_t1.value().item();
        b.r_t2 = t.r_t2.value().item();
    }
    if (cfg.has_aux()) b.kl_aux = mean(t.kl_aux).value().item();
    b.total = t.total.value().item();
    return fp;
}

Tensor reconstruct(const HybridModel& model, const Tensor& x) {
    const ModelConfig& cfg = model.config();
    if (x.rows() == 0) throw EmptyBatchError("reconstruct on an empty batch");
    Tape tape;
    const Binding bound = model.params().bind(tape);
    const Var xv = tape.constant(x);
    const ForwardOptions opts;
    LatentDraw aux, phys;
    if (cfg.has_aux()) aux = encode_aux(model, bound, xv, opts);
    if (cfg.has_phys()) phys = encode_phys(model, bound, xv, aux.mean, opts);

    Tensor out;
    if (cfg.has_phys()) out = physics_decode_values(model.physics(), model.params(), phys.z.value(),
                                                    slice_lastdim(x, 0, cfg.channels));
    if (cfg.has_aux()) {
        Tensor f_a = mlp_forward(model.aux_decoder(), bound, aux.z).value();
        out = cfg.has_phys() ? add(out, f_a) : std::move(f_a);
    }
    return out;
}

}  // namespace phyvae
