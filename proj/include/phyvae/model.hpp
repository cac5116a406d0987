#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "phyvae/attention.hpp"
#include "phyvae/data.hpp"
#include "phyvae/flows.hpp"
#include "phyvae/nn.hpp"
#include "phyvae/physics.hpp"

namespace phyvae {

/// Posterior family of one latent branch. `none` removes the branch.
enum class Posterior { none, gaussian, flow, attentive_flow };

enum class Variant { ord_vae, phy_vae, ord_phy_r, nf_phy_r, att_nf_phy_r };

std::string_view posterior_name(Posterior p);
Posterior parse_posterior(std::string_view name);
std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
inline constexpr Variant kAllVariants[] = {Variant::ord_vae, Variant::phy_vae, Variant::ord_phy_r, Variant::nf_phy_r,
                                           Variant::att_nf_phy_r};

struct ModelConfig {
    std::size_t channels = 3;
    std::size_t time_points = 100;
    std::size_t aux_latent = 15;
    std::size_t phys_latent = 2;
    Posterior aux_posterior = Posterior::flow;
    Posterior phys_posterior = Posterior::flow;
    std::size_t aux_flows = 12;
    std::size_t phys_flows = 5;

    std::vector<std::size_t> aux_feature{512, 512, 512};
    std::vector<std::size_t> aux_head{64, 32};
    std::vector<std::size_t> phys_feature{512, 512, 300, 512, 512, 512};
    std::vector<std::size_t> phys_head{128};
    std::vector<std::size_t> aux_decoder{512, 512};
    std::size_t hamiltonian_hidden = 128;
    IntegrationGrid grid;

    double noise_variance = 1.0;  // sigma_n^2 of the observation model
    double latent_init_stddev = 0.1;

    std::size_t input_width() const { return channels * time_points; }
    bool has_aux() const { return aux_posterior != Posterior::none; }
    bool has_phys() const { return phys_posterior != Posterior::none; }
    void validate() const;
};

/// Branch families for a named variant, other fields taken from `base`.
ModelConfig variant_config(Variant v, ModelConfig base = {});

/// Trunk -> (mean head, log-variance head) -> optional flow chain ->
/// optional attentive fusion.
struct LatentEncoder {
    Posterior family = Posterior::none;
    std::size_t dim = 0;
    Mlp trunk;
    Mlp mean_head;
    Mlp logvar_head;
    FlowChain chain;
    std::optional<AttentionParams> attention;
};

class HybridModel {
public:
    HybridModel(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    const LatentEncoder& aux() const noexcept { return aux_; }
    const LatentEncoder& phys() const noexcept { return phys_; }
    const Mlp& aux_decoder() const noexcept { return aux_decoder_; }
    const PhysicsDecoder& physics() const noexcept { return physics_; }

private:
    ModelConfig config_;
    ParameterSet params_;
    LatentEncoder aux_;
    LatentEncoder phys_;
    Mlp aux_decoder_;
    PhysicsDecoder physics_;
};

/// z0 = m + sqrt(var) * eps. Throws NumericDomainError on a nonpositive variance.
Var reparam_sample(const Var& mean, const Var& var, const Tensor& eps);
Tensor standard_normal(const Shape& shape, std::mt19937_64& rng);

/// Per-row diagonal Gaussian log-density, [N, 1].
Var gaussian_log_pdf(const Var& x, const Var& mean, const Var& var);
/// Per-row standard-normal log-density, [N, 1].
Var standard_normal_log_pdf(const Var& x);

/// One latent per row with its exact posterior log-density.
struct LatentDraw {
    Var mean;      // base mean, [N, D]
    Var var;       // base variance
    Var z0;        // base draw
    Var z_flow;    // after the flow chain
    Var z;         // after attentive fusion (== z_flow otherwise)
    Var log_det;   // [N, 1]
    Var log_q;     // log q(z_flow), [N, 1]
    Var features;  // trunk output after any noise mask
};

/// How a forward pass draws randomness. Without `sample_rng` eps = 0 and the
/// encoder returns posterior-mean latents.
struct ForwardOptions {
    std::mt19937_64* sample_rng = nullptr;
    const NoiseSpec* noise = nullptr;
    std::mt19937_64* noise_rng = nullptr;
    bool differentiable_physics = true;
};

LatentDraw encode_aux(const HybridModel& model, const Binding& bound, const Var& x, const ForwardOptions& opts);
/// `m_aux` is the auxiliary posterior mean of the same batch; pass an empty
/// Var when the model has no auxiliary branch.
LatentDraw encode_phys(const HybridModel& model, const Binding& bound, const Var& x, const Var& m_aux,
                       const ForwardOptions& opts);
/// Mixing input for the physics encoder: concat(x, m_aux).
Var mix_input(const Var& x, const Var& m_aux);

struct Decoded {
    Var x_hat;
    Var f_p;  // empty without a physics branch
    Var f_a;  // empty without an auxiliary branch
};

/// x_hat = f_P(z_P, x0) + f_A(z_aux); either latent may be empty.
Decoded decode(const HybridModel& model, const Binding& bound, const Var& z_p, const Var& z_aux, const Var& x0,
               bool differentiable_physics = true);

/// First observation frame of time-major rows.
Var initial_frame(const Var& x, std::size_t channels);

/// Batch means of the loss terms. total = -elbo + alpha r_t1 + beta r_t2.
struct LossBreakdown {
    double elbo = 0.0;
    double recon_term = 0.0;
    double kl_phys = 0.0;
    double kl_aux = 0.0;
    double r_t1 = 0.0;
    double r_t2 = 0.0;
    double total = 0.0;
};

struct LossTerms {
    Var recon;   // [N, 1] log N(x | x_hat, sigma_n^2 I)
    Var kl_phys; // [N, 1] single-draw estimate, empty without the branch
    Var kl_aux;
    Var elbo;    // scalar batch mean
    Var r_t1;    // scalar batch mean, empty without a physics branch
    Var r_t2;
    Var total;
};

/// log N(x | x_hat, var I) summed over each row, [N, 1].
Var reconstruction_log_likelihood(const Var& x, const Var& x_hat, double noise_variance);
/// Single-draw KL estimate log q(z) - log N(z; 0, I), [N, 1].
Var kl_single_draw(const LatentDraw& draw);

/// r_t1: mean of (x - f_P)^2. r_t2: mean of (stop(m_P(mix)) - m_P(concat(f_P, 0)))^2.
Var regularizer_t1(const Var& x, const Var& f_p);
Var regularizer_t2(const HybridModel& model, const Binding& bound, const LatentDraw& phys, const Var& f_p);

struct ForwardPass {
    LatentDraw aux;
    LatentDraw phys;
    Decoded decoded;
    LossTerms terms;
    LossBreakdown breakdown;
};

/// Full objective on a batch x [N, M * t] recorded on `bound`'s tape.
ForwardPass total_loss(const HybridModel& model, const Binding& bound, const Var& x, double alpha, double beta,
                       const ForwardOptions& opts);

/// Posterior-mean reconstruction (eps = 0, no noise, physics gradient not recorded).
Tensor reconstruct(const HybridModel& model, const Tensor& x);

}  // namespace phyvae
