#include "phyvae/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "phyvae/checkpoint.hpp"
#include "phyvae/errors.hpp"

namespace phyvae {

using json = nlohmann::ordered_json;

namespace {

json variants_json(const std::vector<Variant>& vs) {
    json a = json::array();
    for (Variant v : vs) a.push_back(std::string(variant_name(v)));
    return a;
}

std::vector<Variant> variants_from(const json& j) {
    std::vector<Variant> out;
    for (const auto& v : j) out.push_back(parse_variant(v.get<std::string>()));
    return out;
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["variant"] = std::string(variant_name(c.variant));
    j["variants"] = variants_json(c.variants);
    j["epochs"] = c.epochs;
    j["noise_epochs"] = c.noise_epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.adam.learning_rate;
    j["adam_beta1"] = c.adam.beta1;
    j["adam_beta2"] = c.adam.beta2;
    j["adam_eps"] = c.adam.epsilon;
    j["weight_decay"] = c.adam.weight_decay;
    j["alpha"] = c.alpha;
    j["beta"] = c.beta;
    j["aux_latent"] = c.model.aux_latent;
    j["phys_latent"] = c.model.phys_latent;
    j["aux_flows"] = c.model.aux_flows;
    j["phys_flows"] = c.model.phys_flows;
    j["aux_feature"] = c.model.aux_feature;
    j["aux_head"] = c.model.aux_head;
    j["phys_feature"] = c.model.phys_feature;
    j["phys_head"] = c.model.phys_head;
    j["aux_decoder"] = c.model.aux_decoder;
    j["hamiltonian_hidden"] = c.model.hamiltonian_hidden;
    j["t0"] = c.model.grid.t0;
    j["t1"] = c.model.grid.t1;
    j["substeps"] = c.model.grid.substeps;
    j["noise_variance"] = c.model.noise_variance;
    j["latent_init_stddev"] = c.model.latent_init_stddev;
    j["seeds"] = c.seeds;
    j["csv"] = c.csv_path;
    j["synthetic_count"] = c.synth.count;
    j["data_seed"] = c.synth.seed;
    j["synth_points"] = c.synth.points;
    j["synth_residual_scale"] = c.synth.residual_scale;
    j["synth_noise_stddev"] = c.synth.noise_stddev;
    j["train_size"] = c.split.train;
    j["validation_size"] = c.split.validation;
    j["test_size"] = c.split.test;
    j["split_seed"] = c.split_seed;
    j["noise_samples"] = c.noise_samples;
    j["noise_features"] = c.noise_features;
    j["noise_variants"] = variants_json(c.noise_variants);
    j["noise_control"] = c.noise_control;
    j["ablation_cells"] = c.ablation_cells;
    j["report_degrees"] = c.report_degrees;
    j["save_checkpoints"] = c.save_checkpoints;
    j["output_dir"] = c.output_dir.string();
    return j;
}

template <class T>
void take(const json& j, T& field) {
    field = j.get<T>();
}

void apply_key(ExperimentConfig& c, const std::string& k, const json& v) {
    if (k == "variant") c.variant = parse_variant(v.get<std::string>());
    else if (k == "variants") c.variants = variants_from(v);
    else if (k == "epochs") take(v, c.epochs);
    else if (k == "noise_epochs") take(v, c.noise_epochs);
    else if (k == "batch_size") take(v, c.batch_size);
    else if (k == "lr") take(v, c.adam.learning_rate);
    else if (k == "adam_beta1") take(v, c.adam.beta1);
    else if (k == "adam_beta2") take(v, c.adam.beta2);
    else if (k == "adam_eps") take(v, c.adam.epsilon);
    else if (k == "weight_decay") take(v, c.adam.weight_decay);
    else if (k == "alpha") take(v, c.alpha);
    else if (k == "beta") take(v, c.beta);
    else if (k == "aux_latent") take(v, c.model.aux_latent);
    else if (k == "phys_latent") take(v, c.model.phys_latent);
    else if (k == "aux_flows") take(v, c.model.aux_flows);
    else if (k == "phys_flows") take(v, c.model.phys_flows);
    else if (k == "aux_feature") take(v, c.model.aux_feature);
    else if (k == "aux_head") take(v, c.model.aux_head);
    else if (k == "phys_feature") take(v, c.model.phys_feature);
    else if (k == "phys_head") take(v, c.model.phys_head);
    else if (k == "aux_decoder") take(v, c.model.aux_decoder);
    else if (k == "hamiltonian_hidden") take(v, c.model.hamiltonian_hidden);
    else if (k == "t0") take(v, c.model.grid.t0);
    else if (k == "t1") take(v, c.model.grid.t1);
    else if (k == "substeps") take(v, c.model.grid.substeps);
    else if (k == "noise_variance") take(v, c.model.noise_variance);
    else if (k == "latent_init_stddev") take(v, c.model.latent_init_stddev);
    else if (k == "seeds") take(v, c.seeds);
    else if (k == "csv") take(v, c.csv_path);
    else if (k == "synthetic_count") take(v, c.synth.count);
    else if (k == "data_seed") take(v, c.synth.seed);
    else if (k == "synth_points") take(v, c.synth.points);
    else if (k == "synth_residual_scale") take(v, c.synth.residual_scale);
    else if (k == "synth_noise_stddev") take(v, c.synth.noise_stddev);
    else if (k == "train_size") take(v, c.split.train);
    else if (k == "validation_size") take(v, c.split.validation);
    else if (k == "test_size") take(v, c.split.test);
    else if (k == "split_seed") take(v, c.split_seed);
    else if (k == "noise_samples") take(v, c.noise_samples);
    else if (k == "noise_features") take(v, c.noise_features);
    else if (k == "noise_variants") c.noise_variants = variants_from(v);
    else if (k == "noise_control") take(v, c.noise_control);
    else if (k == "ablation_cells") take(v, c.ablation_cells);
    else if (k == "report_degrees") take(v, c.report_degrees);
    else if (k == "save_checkpoints") take(v, c.save_checkpoints);
    else if (k == "output_dir") c.output_dir = v.get<std::string>();
    else throw std::invalid_argument("unknown config key '" + k + "'");
}

Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    const std::size_t c = x.cols();
    Tensor out({rows.size(), c});
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * c), c,
                    out.data().begin() + static_cast<std::ptrdiff_t>(r * c));
    return out;
}

Tensor row_range(const Tensor& x, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    return take_rows(x, rows);
}

void add_into(LossBreakdown& acc, const LossBreakdown& b, double w) {
    acc.elbo += w * b.elbo;
    acc.recon_term += w * b.recon_term;
    acc.kl_phys += w * b.kl_phys;
    acc.kl_aux += w * b.kl_aux;
    acc.r_t1 += w * b.r_t1;
    acc.r_t2 += w * b.r_t2;
    acc.total += w * b.total;
}

bool regularized(Variant v) {
    return v == Variant::ord_phy_r || v == Variant::nf_phy_r || v == Variant::att_nf_phy_r;
}

std::string safe_name(std::string s) {
    for (char& ch : s)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
    return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError(0, "cannot write " + path.string());
    return out;
}

void write_loss(std::ostream& out, const LossBreakdown& b) {
    out << format_double(b.total) << ',' << format_double(b.elbo) << ',' << format_double(b.recon_term) << ','
        << format_double(b.kl_phys) << ',' << format_double(b.kl_aux) << ',' << format_double(b.r_t1) << ','
        << format_double(b.r_t2);
}

constexpr const char* kLossHeader = "total,elbo,recon,kl_phys,kl_aux,r_t1,r_t2";

double mean_of(const std::vector<double>& v) {
    return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                     : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

void apply_config_json(ExperimentConfig& cfg, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        try {
            apply_key(cfg, it.key(), it.value());
        } catch (const json::exception& e) {
            throw std::invalid_argument("config key '" + it.key() + "': " + e.what());
        }
    }
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw DataError(0, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_json(base, ss.str());
    return base;
}

std::string config_hash(const ExperimentConfig& cfg) {
    json j = to_json(cfg);
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData d;
    if (!cfg.csv_path.empty()) {
        GaitLoadResult r = load_gait_csv(cfg.csv_path, cfg.synth.points);
        for (const auto& rej : r.rejected) std::cerr << "rejected sample " << rej.id << ": " << rej.reason << "\n";
        d.samples = std::move(r.samples);
        d.source = "csv:" + cfg.csv_path;
    } else {
        d.samples = synth_generate(cfg.synth);
        d.source = "synthetic:count=" + std::to_string(cfg.synth.count) + ",seed=" + std::to_string(cfg.synth.seed);
    }
    d.split = make_split(d.samples.size(), cfg.split, cfg.split_seed);
    d.stats = fit_normalization(d.samples, d.split.train);
    d.train = to_model_matrix(d.samples, d.split.train, d.stats);
    d.validation = to_model_matrix(d.samples, d.split.validation, d.stats);
    d.test = to_model_matrix(d.samples, d.split.test, d.stats);
    return d;
}

ModelConfig model_config_for(const ExperimentConfig& cfg, const PreparedData& data) {
    ModelConfig m = cfg.model;
    m.channels = kGaitChannels;
    m.time_points = data.train.cols() / kGaitChannels;
    m.grid.points = m.time_points;
    return m;
}

double evaluate_mae(const Tensor& x, const std::function<Tensor(const Tensor&)>& reconstructor,
                    std::size_t batch_size) {
    if (x.rows() == 0 || x.numel() == 0) throw EmptyBatchError("evaluate_mae on an empty set");
    if (batch_size == 0) throw std::invalid_argument("evaluate_mae: batch size must be positive");
    double total = 0.0;
    for (std::size_t b = 0; b < x.rows(); b += batch_size) {
        const Tensor xb = row_range(x, b, std::min(x.rows(), b + batch_size));
        const Tensor xh = reconstructor(xb);
        if (!xh.same_shape(xb)) throw DimensionError("reconstructor changed the batch shape");
        for (std::size_t i = 0; i < xb.numel(); ++i) total += std::abs(xb[i] - xh[i]);
    }
    return total / static_cast<double>(x.numel());
}

double evaluate_mae(const HybridModel& model, const Tensor& x, std::size_t batch_size) {
    return evaluate_mae(x, [&](const Tensor& xb) { return reconstruct(model, xb); }, batch_size);
}

double evaluate_mae_degrees(const HybridModel& model, const Tensor& x, std::size_t batch_size,
                            const NormalizationStats& stats) {
    const Tensor x_deg = denormalize(x, stats);
    return evaluate_mae(
        x_deg, [&](const Tensor& xb) { return denormalize(reconstruct(model, normalize(xb, stats)), stats); },
        batch_size);
}

TrainResult train_model(const TrainSpec& spec, const Tensor& train, const Tensor& validation) {
    const auto start = std::chrono::steady_clock::now();
    if (spec.batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (spec.noise) spec.noise->validate();
    TrainResult result{HybridModel(spec.model, spec.seed), {}, {}, 0.0};
    HybridModel& model = result.model;
    if (train.cols() != spec.model.input_width())
        throw DimensionError("training data width " + std::to_string(train.cols()) + ", model expects " +
                             std::to_string(spec.model.input_width()));
    const std::size_t n = train.rows();
    if (spec.epochs > 0 && n == 0) throw EmptyBatchError("empty training set");

    AdamState adam(model.params(), spec.adam);
    auto shuffle_rng = stream_for(spec.seed, "train.shuffle");
    auto sample_rng = stream_for(spec.seed, "train.sample");
    auto noise_rng = stream_for(spec.seed, "train.noise");
    const Tensor seed_grad({1}, 1.0);

    std::vector<std::size_t> order(n);
    for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(shuffle_rng)]);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        const std::size_t batches = (n + spec.batch_size - 1) / spec.batch_size;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * spec.batch_size, hi = std::min(n, lo + spec.batch_size);
            const Tensor xb = take_rows(train, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                                                        order.begin() + static_cast<std::ptrdiff_t>(hi)));
            Tape tape;
            const Binding bound = model.params().bind(tape);
            ForwardOptions opts;
            opts.sample_rng = &sample_rng;
            opts.noise = spec.noise ? &*spec.noise : nullptr;
            opts.noise_rng = &noise_rng;
            std::vector<Tensor> grads;
            LossBreakdown loss;
            try {
                const ForwardPass fp = total_loss(model, bound, tape.constant(xb), spec.alpha, spec.beta, opts);
                loss = fp.breakdown;
                if (!std::isfinite(loss.total)) throw DivergenceError(epoch, b);
                grads = tape.backward(fp.terms.total, seed_grad, bound.vars());
            } catch (const NumericDomainError&) {
                throw DivergenceError(epoch, b);
            } catch (const IntegrationError&) {
                throw DivergenceError(epoch, b);
            }
            adam_step(adam, model.params(), grads);
            result.steps.push_back({epoch, b, loss});
            add_into(rec.mean_loss, loss, static_cast<double>(hi - lo) / static_cast<double>(n));
        }
        rec.validation_mae = spec.validate_each_epoch && validation.rows() > 0
                                 ? evaluate_mae(model, validation, spec.batch_size)
                                 : std::numeric_limits<double>::quiet_NaN();
        result.epochs.push_back(rec);
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string family_tag(const ModelConfig& m) {
    return "aux=" + std::string(posterior_name(m.aux_posterior)) + ";phys=" +
           std::string(posterior_name(m.phys_posterior));
}

ModelConfig model_config_for_tag(const std::string& tag, ModelConfig base) {
    if (tag.rfind("aux=", 0) == 0) {
        const auto semi = tag.find(";phys=");
        if (semi == std::string::npos) throw std::invalid_argument("bad family tag '" + tag + "'");
        base.aux_posterior = parse_posterior(tag.substr(4, semi - 4));
        base.phys_posterior = parse_posterior(tag.substr(semi + 6));
        return base;
    }
    return variant_config(parse_variant(tag), base);
}

ResultRecord run_job(const ExperimentConfig& cfg, const PreparedData& data, const TrainSpec& spec,
                     const std::string& suite) {
    std::cerr << "[" << suite << "] " << spec.variant << " " << spec.cell << " seed " << spec.seed << " ..."
              << std::flush;
    TrainResult tr = train_model(spec, data.train, data.validation);
    ResultRecord r;
    r.config_hash = config_hash(cfg);
    r.variant = spec.variant;
    r.cell = spec.cell;
    r.seed = spec.seed;
    if (spec.noise) {
        r.pct_samples = spec.noise->pct_samples;
        r.pct_features = spec.noise->pct_features;
    }
    r.alpha = spec.alpha;
    r.beta = spec.beta;
    r.epochs = spec.epochs;
    if (!tr.epochs.empty()) {
        r.final_loss = tr.epochs.back().mean_loss;
        r.final_validation_mae = tr.epochs.back().validation_mae;
    } else {
        r.final_validation_mae =
            data.validation.rows() ? evaluate_mae(tr.model, data.validation, spec.batch_size)
                                   : std::numeric_limits<double>::quiet_NaN();
    }
    r.test_mae = evaluate_mae(tr.model, data.test, spec.batch_size);
    r.test_mae_degrees = cfg.report_degrees ? evaluate_mae_degrees(tr.model, data.test, spec.batch_size, data.stats)
                                            : std::numeric_limits<double>::quiet_NaN();
    if (cfg.save_checkpoints) {
        const std::string name = safe_name(suite + "_" + spec.variant + "_" + spec.cell + "_s" +
                                           std::to_string(spec.seed)) + ".ckpt";
        std::filesystem::create_directories(cfg.output_dir / "checkpoints");
        write_checkpoint(cfg.output_dir / "checkpoints" / name,
                         make_checkpoint(tr.model.params(), spec.variant, r.config_hash));
        r.checkpoint = "checkpoints/" + name;
    }
    r.wall_seconds = tr.wall_seconds;
    r.epoch_records = std::move(tr.epochs);
    r.step_records = std::move(tr.steps);
    std::cerr << " test MAE " << r.test_mae << " (" << r.wall_seconds << " s)\n";
    return r;
}

std::vector<ResultRecord> run_variant_suite(const ExperimentConfig& cfg, const PreparedData& data) {
    std::vector<ResultRecord> runs;
    const ModelConfig base = model_config_for(cfg, data);
    for (Variant v : cfg.variants) {
        for (std::uint64_t seed : cfg.seeds) {
            TrainSpec spec;
            spec.variant = std::string(variant_name(v));
            spec.model = variant_config(v, base);
            spec.epochs = cfg.epochs;
            spec.batch_size = cfg.batch_size;
            spec.adam = cfg.adam;
            spec.alpha = regularized(v) ? cfg.alpha : 0.0;
            spec.beta = regularized(v) ? cfg.beta : 0.0;
            spec.seed = seed;
            runs.push_back(run_job(cfg, data, spec, "suite"));
        }
    }
    return runs;
}

NoiseSweepResult noise_sweep(const ExperimentConfig& cfg, const PreparedData& data) {
    NoiseSweepResult out;
    const ModelConfig base = model_config_for(cfg, data);
    for (double ps : cfg.noise_samples) NoiseSpec{ps, 50.0}.validate();
    for (double pf : cfg.noise_features) NoiseSpec{50.0, pf}.validate();
    for (Variant v : cfg.noise_variants) {
        std::vector<std::pair<double, double>> grid;
        if (cfg.noise_control) grid.emplace_back(0.0, 0.0);
        for (double ps : cfg.noise_samples)
            for (double pf : cfg.noise_features) grid.emplace_back(ps, pf);
        for (auto [ps, pf] : grid) {
            std::vector<double> maes;
            for (std::uint64_t seed : cfg.seeds) {
                TrainSpec spec;
                spec.variant = std::string(variant_name(v));
                spec.model = variant_config(v, base);
                spec.epochs = cfg.noise_epochs;
                spec.batch_size = cfg.batch_size;
                spec.adam = cfg.adam;
                spec.alpha = regularized(v) ? cfg.alpha : 0.0;
                spec.beta = regularized(v) ? cfg.beta : 0.0;
                spec.seed = seed;
                if (ps > 0.0) {
                    spec.noise = NoiseSpec{ps, pf};
                    spec.cell = "s" + format_double(ps) + "_f" + format_double(pf);
                } else {
                    spec.cell = "control";
                }
                spec.validate_each_epoch = false;
                out.runs.push_back(run_job(cfg, data, spec, "noise"));
                maes.push_back(out.runs.back().test_mae);
            }
            out.cells.push_back({std::string(variant_name(v)), ps, pf, mean_of(maes)});
        }
    }
    return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman needs two equal series, n >= 2");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double ma = mean_of(ra), mb = mean_of(rb);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

std::vector<AblationCell> ablation_cells(const ExperimentConfig& cfg) {
    using P = Posterior;
    const double a = cfg.alpha, b = cfg.beta;
    std::vector<AblationCell> all{
        {"latents_single", "NF_only_zA", P::flow, P::none, 0.0, 0.0},
        {"latents_single", "NF_only_zP", P::none, P::flow, a, b},
        {"latents_single", "AttNF_only_zA", P::attentive_flow, P::none, 0.0, 0.0},
        {"latents_single", "AttNF_only_zP", P::none, P::attentive_flow, a, b},
        {"latents_mixed", "zA_NF_zP_MLP", P::flow, P::gaussian, a, b},
        {"latents_mixed", "zA_MLP_zP_NF", P::gaussian, P::flow, a, b},
        {"latents_mixed", "zA_AttNF_zP_MLP", P::attentive_flow, P::gaussian, a, b},
        {"latents_mixed", "zA_MLP_zP_AttNF", P::gaussian, P::attentive_flow, a, b},
        {"latents_nf_att", "zA_NF_zP_AttNF", P::flow, P::attentive_flow, a, b},
        {"latents_nf_att", "zA_AttNF_zP_NF", P::attentive_flow, P::flow, a, b},
        {"regularizers", "NF_alpha0", P::flow, P::flow, 0.0, b},
        {"regularizers", "NF_beta0", P::flow, P::flow, a, 0.0},
        {"regularizers", "NF_alpha0_beta0", P::flow, P::flow, 0.0, 0.0},
        {"regularizers", "AttNF_alpha0", P::attentive_flow, P::attentive_flow, 0.0, b},
        {"regularizers", "AttNF_beta0", P::attentive_flow, P::attentive_flow, a, 0.0},
        {"regularizers", "AttNF_alpha0_beta0", P::attentive_flow, P::attentive_flow, 0.0, 0.0},
    };
    if (cfg.ablation_cells.empty()) return all;
    std::vector<AblationCell> chosen;
    for (const auto& name : cfg.ablation_cells) {
        auto it = std::find_if(all.begin(), all.end(), [&](const AblationCell& c) { return c.name == name; });
        if (it == all.end()) throw std::invalid_argument("unknown ablation cell '" + name + "'");
        chosen.push_back(*it);
    }
    return chosen;
}

std::vector<ResultRecord> ablation_suite(const ExperimentConfig& cfg, const PreparedData& data) {
    std::vector<ResultRecord> runs;
    const ModelConfig base = model_config_for(cfg, data);
    for (const AblationCell& cell : ablation_cells(cfg)) {
        for (std::uint64_t seed : cfg.seeds) {
            TrainSpec spec;
            spec.model = base;
            spec.model.aux_posterior = cell.aux;
            spec.model.phys_posterior = cell.phys;
            spec.variant = family_tag(spec.model);
            spec.cell = cell.name;
            spec.epochs = cfg.epochs;
            spec.batch_size = cfg.batch_size;
            spec.adam = cfg.adam;
            spec.alpha = cell.alpha;
            spec.beta = cell.beta;
            spec.seed = seed;
            runs.push_back(run_job(cfg, data, spec, "ablate"));
        }
    }
    return runs;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

namespace {

constexpr const char* kRunsHeader =
    "config_hash,variant,cell,seed,pct_samples,pct_features,alpha,beta,epochs,final_total,final_elbo,"
    "final_recon,final_kl_phys,final_kl_aux,final_r_t1,final_r_t2,final_validation_mae,test_mae,"
    "test_mae_degrees,checkpoint";

double parse_double(std::string_view s, std::size_t line) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError(line, "bad number '" + std::string(s) + "'");
    return v;
}

std::uint64_t parse_u64(std::string_view s, std::size_t line) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError(line, "bad integer '" + std::string(s) + "'");
    return v;
}

}  // namespace

void write_runs_csv(const std::filesystem::path& path, const std::vector<ResultRecord>& runs) {
    auto out = open_out(path);
    out << kRunsHeader << '\n';
    for (const auto& r : runs) {
        out << r.config_hash << ',' << r.variant << ',' << r.cell << ',' << r.seed << ','
            << format_double(r.pct_samples) << ',' << format_double(r.pct_features) << ',' << format_double(r.alpha)
            << ',' << format_double(r.beta) << ',' << r.epochs << ',';
        write_loss(out, r.final_loss);
        out << ',' << format_double(r.final_validation_mae) << ',' << format_double(r.test_mae) << ','
            << format_double(r.test_mae_degrees) << ',' << r.checkpoint << '\n';
    }
}

std::vector<ResultRecord> read_runs_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(0, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kRunsHeader) throw DataError(1, "unexpected header in " + path.string());
    std::vector<ResultRecord> runs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 20) throw DataError(line_no, "expected 20 fields, found " + std::to_string(f.size()));
        ResultRecord r;
        r.config_hash = f[0];
        r.variant = f[1];
        r.cell = f[2];
        r.seed = parse_u64(f[3], line_no);
        r.pct_samples = parse_double(f[4], line_no);
        r.pct_features = parse_double(f[5], line_no);
        r.alpha = parse_double(f[6], line_no);
        r.beta = parse_double(f[7], line_no);
        r.epochs = parse_u64(f[8], line_no);
        r.final_loss.total = parse_double(f[9], line_no);
        r.final_loss.elbo = parse_double(f[10], line_no);
        r.final_loss.recon_term = parse_double(f[11], line_no);
        r.final_loss.kl_phys = parse_double(f[12], line_no);
        r.final_loss.kl_aux = parse_double(f[13], line_no);
        r.final_loss.r_t1 = parse_double(f[14], line_no);
        r.final_loss.r_t2 = parse_double(f[15], line_no);
        r.final_validation_mae = parse_double(f[16], line_no);
        r.test_mae = parse_double(f[17], line_no);
        r.test_mae_degrees = parse_double(f[18], line_no);
        r.checkpoint = f[19];
        runs.push_back(std::move(r));
    }
    return runs;
}

void write_steps_csv(const std::filesystem::path& path, const std::vector<ResultRecord>& runs) {
    auto out = open_out(path);
    out << "variant,cell,seed,epoch,batch," << kLossHeader << '\n';
    for (const auto& r : runs)
        for (const auto& s : r.step_records) {
            out << r.variant << ',' << r.cell << ',' << r.seed << ',' << s.epoch << ',' << s.batch << ',';
            write_loss(out, s.loss);
            out << '\n';
        }
}

void write_epochs_csv(const std::filesystem::path& path, const std::vector<ResultRecord>& runs) {
    auto out = open_out(path);
    out << "variant,cell,seed,epoch," << kLossHeader << ",validation_mae\n";
    for (const auto& r : runs)
        for (const auto& e : r.epoch_records) {
            out << r.variant << ',' << r.cell << ',' << r.seed << ',' << e.epoch << ',';
            write_loss(out, e.mean_loss);
            out << ',' << format_double(e.validation_mae) << '\n';
        }
}

void write_long_csv(const std::filesystem::path& path, const std::vector<ResultRecord>& runs) {
    auto out = open_out(path);
    out << "variant,cell,seed,metric,value\n";
    for (const auto& r : runs) {
        auto row = [&](const std::string& metric, double v) {
            out << r.variant << ',' << r.cell << ',' << r.seed << ',' << metric << ',' << format_double(v) << '\n';
        };
        row("test_mae", r.test_mae);
        if (!std::isnan(r.test_mae_degrees)) row("test_mae_degrees", r.test_mae_degrees);
        row("final_total", r.final_loss.total);
        row("final_elbo", r.final_loss.elbo);
        row("final_validation_mae", r.final_validation_mae);
        for (const auto& e : r.epoch_records) {
            row("epoch" + std::to_string(e.epoch) + "_total", e.mean_loss.total);
            if (!std::isnan(e.validation_mae)) row("epoch" + std::to_string(e.epoch) + "_validation_mae", e.validation_mae);
        }
    }
}

void write_suite_table(const std::filesystem::path& path, const std::vector<ResultRecord>& runs) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> maes;
    for (const auto& r : runs) {
        if (!maes.count(r.variant)) order.push_back(r.variant);
        maes[r.variant].push_back(r.test_mae);
    }
    auto out = open_out(path);
    out << "variant,runs,mae_mean,mae_std\n";
    for (const auto& v : order)
        out << v << ',' << maes[v].size() << ',' << format_double(mean_of(maes[v])) << ','
            << format_double(stddev_of(maes[v])) << '\n';
}

void write_noise_tables(const std::filesystem::path& dir, const ExperimentConfig& cfg, const NoiseSweepResult& r) {
    std::filesystem::create_directories(dir);
    auto trend = open_out(dir / "noise_trend.csv");
    trend << "variant,pct_samples,spearman_mae_vs_features\n";
    for (Variant v : cfg.noise_variants) {
        const std::string name(variant_name(v));
        auto out = open_out(dir / ("noise_" + name + ".csv"));
        out << "pct_samples";
        for (double pf : cfg.noise_features) out << ",features_" << format_double(pf);
        out << '\n';
        auto find = [&](double ps, double pf) {
            for (const auto& c : r.cells)
                if (c.variant == name && c.pct_samples == ps && c.pct_features == pf) return c.mean_mae;
            return std::numeric_limits<double>::quiet_NaN();
        };
        if (cfg.noise_control) {
            out << "control";
            for (std::size_t i = 0; i < cfg.noise_features.size(); ++i) out << ',' << format_double(find(0.0, 0.0));
            out << '\n';
        }
        for (double ps : cfg.noise_samples) {
            out << format_double(ps);
            std::vector<double> row;
            for (double pf : cfg.noise_features) {
                row.push_back(find(ps, pf));
                out << ',' << format_double(row.back());
            }
            out << '\n';
            const double rho = row.size() >= 2 ? spearman(cfg.noise_features, row)
                                               : std::numeric_limits<double>::quiet_NaN();
            trend << name << ',' << format_double(ps) << ',' << format_double(rho) << '\n';
        }
    }
}

void write_ablation_table(const std::filesystem::path& path, const std::vector<AblationCell>& cells,
                          const std::vector<ResultRecord>& runs) {
    auto out = open_out(path);
    out << "table,cell,aux,phys,alpha,beta,runs,mae_mean,mae_std\n";
    for (const auto& c : cells) {
        std::vector<double> maes;
        for (const auto& r : runs)
            if (r.cell == c.name) maes.push_back(r.test_mae);
        out << c.table << ',' << c.name << ',' << posterior_name(c.aux) << ',' << posterior_name(c.phys) << ','
            << format_double(c.alpha) << ',' << format_double(c.beta) << ',' << maes.size() << ','
            << format_double(mean_of(maes)) << ',' << format_double(stddev_of(maes)) << '\n';
    }
}

void write_dataset_manifest(const std::filesystem::path& path, const PreparedData& data) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_manifest(path, DatasetManifest{data.source, data.samples.size(), data.split, data.stats});
}

}  // namespace phyvae
