// Command-line experiment runner.
#include <chrono>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phyvae/checkpoint.hpp"
#include "phyvae/errors.hpp"
#include "phyvae/harness.hpp"

using namespace phyvae;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kDataFailure = 3, kDiverged = 4 };

struct CliState {
    ExperimentConfig cfg;
    std::string config_file;
    std::string variant;
    std::vector<std::string> variants;
    std::vector<std::string> noise_variants;
    std::string output_dir;
};

void add_common(CLI::App* app, CliState& s) {
    ExperimentConfig& c = s.cfg;
    app->add_option("--config", s.config_file, "JSON config; its keys override flags");
    app->add_option("--output-dir", s.output_dir, "Directory for results, checkpoints and manifest");
    app->add_option("--epochs", c.epochs, "Training epochs");
    app->add_option("--noise-epochs", c.noise_epochs, "Training epochs per noise cell");
    app->add_option("--batch-size", c.batch_size, "Mini-batch size");
    app->add_option("--lr", c.adam.learning_rate, "Adam learning rate");
    app->add_option("--weight-decay", c.adam.weight_decay, "L2 weight decay");
    app->add_option("--adam-eps", c.adam.epsilon, "Adam epsilon");
    app->add_option("--adam-beta1", c.adam.beta1, "Adam first-moment decay");
    app->add_option("--adam-beta2", c.adam.beta2, "Adam second-moment decay");
    app->add_option("--alpha", c.alpha, "Weight of the physics-fit regularizer");
    app->add_option("--beta", c.beta, "Weight of the physics-latent regularizer");
    app->add_option("--aux-flows", c.model.aux_flows, "Planar flows on the auxiliary latent");
    app->add_option("--phys-flows", c.model.phys_flows, "Planar flows on the physics latent");
    app->add_option("--aux-latent", c.model.aux_latent, "Auxiliary latent dimension");
    app->add_option("--phys-latent", c.model.phys_latent, "Physics latent dimension");
    app->add_option("--aux-feature", c.model.aux_feature, "Auxiliary feature extractor widths");
    app->add_option("--aux-head", c.model.aux_head, "Auxiliary head hidden widths");
    app->add_option("--phys-feature", c.model.phys_feature, "Physics feature extractor widths");
    app->add_option("--phys-head", c.model.phys_head, "Physics head hidden widths");
    app->add_option("--aux-decoder", c.model.aux_decoder, "Auxiliary decoder hidden widths");
    app->add_option("--hamiltonian-hidden", c.model.hamiltonian_hidden, "Hidden width of the energy network");
    app->add_option("--substeps", c.model.grid.substeps, "RK4 steps per output interval");
    app->add_option("--noise-variance", c.model.noise_variance, "Observation noise variance");
    app->add_option("--seeds", c.seeds, "Training seeds");
    app->add_option("--csv", c.csv_path, "Gait CSV; synthetic data when omitted");
    app->add_option("--synthetic-count", c.synth.count, "Synthetic sample count");
    app->add_option("--data-seed", c.synth.seed, "Synthetic data seed");
    app->add_option("--synth-residual-scale", c.synth.residual_scale, "Stddev of synthetic harmonic weights");
    app->add_option("--synth-noise-stddev", c.synth.noise_stddev, "Synthetic observation noise stddev");
    app->add_option("--train-size", c.split.train, "Training samples");
    app->add_option("--validation-size", c.split.validation, "Validation samples");
    app->add_option("--test-size", c.split.test, "Test samples");
    app->add_option("--split-seed", c.split_seed, "Seed of the split shuffle");
    app->add_flag("--report-degrees", c.report_degrees, "Also report MAE in original units");
    app->add_flag("!--no-checkpoints", c.save_checkpoints, "Skip writing checkpoints");
}

void finalize(CliState& s) {
    if (!s.variant.empty()) s.cfg.variant = parse_variant(s.variant);
    if (!s.variants.empty()) {
        s.cfg.variants.clear();
        for (const auto& v : s.variants) s.cfg.variants.push_back(parse_variant(v));
    }
    if (!s.noise_variants.empty()) {
        s.cfg.noise_variants.clear();
        for (const auto& v : s.noise_variants) s.cfg.noise_variants.push_back(parse_variant(v));
    }
    if (!s.output_dir.empty()) s.cfg.output_dir = s.output_dir;
    if (!s.config_file.empty()) s.cfg = load_config_file(s.config_file, s.cfg);
}

void write_common(const ExperimentConfig& cfg, const PreparedData& data) {
    std::filesystem::create_directories(cfg.output_dir / "results");
    write_dataset_manifest(cfg.output_dir / "manifest.txt", data);
    std::ofstream(cfg.output_dir / "config.json") << config_to_json(cfg) << '\n';
}

void write_run_files(const ExperimentConfig& cfg, const std::string& stem, const std::vector<ResultRecord>& runs) {
    const auto dir = cfg.output_dir / "results";
    write_runs_csv(dir / (stem + "_runs.csv"), runs);
    write_epochs_csv(dir / (stem + "_epochs.csv"), runs);
    write_steps_csv(dir / (stem + "_steps.csv"), runs);
    write_long_csv(dir / (stem + "_long.csv"), runs);
    // Wall-clock stays out of results/ so result files are reproducible byte for byte.
    std::ofstream timing(cfg.output_dir / (stem + "_timing.txt"));
    for (const auto& r : runs)
        timing << r.variant << ' ' << r.cell << ' ' << r.seed << ' ' << r.wall_seconds << " s\n";
}

int cmd_train(const ExperimentConfig& cfg) {
    const PreparedData data = prepare_data(cfg);
    write_common(cfg, data);
    std::vector<ResultRecord> runs;
    const Variant v = cfg.variant;
    const bool reg = v == Variant::ord_phy_r || v == Variant::nf_phy_r || v == Variant::att_nf_phy_r;
    for (std::uint64_t seed : cfg.seeds) {
        TrainSpec spec;
        spec.variant = std::string(variant_name(v));
        spec.model = variant_config(v, model_config_for(cfg, data));
        spec.epochs = cfg.epochs;
        spec.batch_size = cfg.batch_size;
        spec.adam = cfg.adam;
        spec.alpha = reg ? cfg.alpha : 0.0;
        spec.beta = reg ? cfg.beta : 0.0;
        spec.seed = seed;
        runs.push_back(run_job(cfg, data, spec, "train"));
    }
    write_run_files(cfg, "train", runs);
    for (const auto& r : runs) std::cout << r.variant << " seed " << r.seed << " test_mae " << r.test_mae << '\n';
    return kOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& split) {
    const PreparedData data = prepare_data(cfg);
    const Checkpoint ckpt = read_checkpoint(checkpoint);
    if (ckpt.config_hash != config_hash(cfg))
        std::cerr << "warning: checkpoint config hash " << ckpt.config_hash << " differs from " << config_hash(cfg)
                  << "\n";
    HybridModel model(model_config_for_tag(ckpt.variant, model_config_for(cfg, data)), 0);
    load_parameters(ckpt, model.params());
    const Tensor* x = &data.test;
    if (split == "validation") x = &data.validation;
    else if (split == "train") x = &data.train;
    else if (split != "test") throw CLI::ValidationError("--split", "must be train, validation or test");
    const double mae = evaluate_mae(model, *x, cfg.batch_size);
    std::filesystem::create_directories(cfg.output_dir / "results");
    std::ofstream out(cfg.output_dir / "results" / "eval.csv");
    out << "checkpoint,variant,config_hash,split,mae";
    if (cfg.report_degrees) out << ",mae_degrees";
    out << '\n' << checkpoint << ',' << ckpt.variant << ',' << ckpt.config_hash << ',' << split << ','
        << format_double(mae);
    std::cout << ckpt.variant << ' ' << split << " mae " << mae;
    if (cfg.report_degrees) {
        const double deg = evaluate_mae_degrees(model, *x, cfg.batch_size, data.stats);
        out << ',' << format_double(deg);
        std::cout << " (" << deg << " deg)";
    }
    out << '\n';
    std::cout << '\n';
    return kOk;
}

int cmd_suite(const ExperimentConfig& cfg) {
    const PreparedData data = prepare_data(cfg);
    write_common(cfg, data);
    const auto runs = run_variant_suite(cfg, data);
    write_run_files(cfg, "suite", runs);
    write_suite_table(cfg.output_dir / "results" / "suite.csv", runs);
    return kOk;
}

int cmd_noise(const ExperimentConfig& cfg) {
    const PreparedData data = prepare_data(cfg);
    write_common(cfg, data);
    const auto sweep = noise_sweep(cfg, data);
    write_run_files(cfg, "noise", sweep.runs);
    write_noise_tables(cfg.output_dir / "results", cfg, sweep);
    return kOk;
}

int cmd_ablate(const ExperimentConfig& cfg) {
    const PreparedData data = prepare_data(cfg);
    write_common(cfg, data);
    const auto runs = ablation_suite(cfg, data);
    write_run_files(cfg, "ablation", runs);
    write_ablation_table(cfg.output_dir / "results" / "ablation.csv", ablation_cells(cfg), runs);
    return kOk;
}

int cmd_synth(const ExperimentConfig& cfg, const std::string& out) {
    const auto samples = synth_generate(cfg.synth);
    write_gait_csv(out, samples);
    std::cout << "wrote " << samples.size() << " samples to " << out << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Physics-integrated VAE experiments"};
    app.require_subcommand(1);
    CliState state;

    auto* train = app.add_subcommand("train", "Train one variant for every seed");
    add_common(train, state);
    train->add_option("--variant", state.variant, "OrdVAE, PhyVAE, OrdPhyR, NFPhyR or AttNFPhyR");

    std::string checkpoint, split = "test";
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(eval, state);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--split", split, "train, validation or test");

    auto* suite = app.add_subcommand("suite", "Train and evaluate every variant");
    add_common(suite, state);
    suite->add_option("--variants", state.variants, "Subset of variants");

    auto* noise = app.add_subcommand("noise-sweep", "Feature-noise grid");
    add_common(noise, state);
    noise->add_option("--noise-variants", state.noise_variants, "Variants to sweep");
    noise->add_option("--noise-samples", state.cfg.noise_samples, "Percent of corrupted rows");
    noise->add_option("--noise-features", state.cfg.noise_features, "Percent of zeroed features per row");
    noise->add_flag("!--no-control", state.cfg.noise_control, "Skip the zero-noise control cell");

    auto* ablate = app.add_subcommand("ablate", "Latent and regularizer ablations");
    add_common(ablate, state);
    ablate->add_option("--cells", state.cfg.ablation_cells, "Subset of ablation cells");

    std::string synth_out = "synthetic.csv";
    auto* synth = app.add_subcommand("synth-data", "Write a synthetic gait CSV");
    add_common(synth, state);
    synth->add_option("--out", synth_out, "Output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        finalize(state);
        const ExperimentConfig& cfg = state.cfg;
        if (*train) return cmd_train(cfg);
        if (*eval) return cmd_eval(cfg, checkpoint, split);
        if (*suite) return cmd_suite(cfg);
        if (*noise) return cmd_noise(cfg);
        if (*ablate) return cmd_ablate(cfg);
        if (*synth) return cmd_synth(cfg, synth_out);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDiverged;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataFailure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}
