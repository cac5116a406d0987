#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "phyvae/adam.hpp"
#include "phyvae/data.hpp"
#include "phyvae/model.hpp"

namespace phyvae {

struct ExperimentConfig {
    Variant variant = Variant::nf_phy_r;
    std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
    std::size_t epochs = 50;
    std::size_t noise_epochs = 10;
    std::size_t batch_size = 100;
    AdamConfig adam;
    double alpha = 1e-2;
    double beta = 1e-1;
    ModelConfig model;
    std::vector<std::uint64_t> seeds{0, 1, 2};

    // Data: a CSV file when `csv_path` is set, synthetic strides otherwise.
    std::string csv_path;
    SynthConfig synth;
    SplitSizes split;
    std::uint64_t split_seed = 0;

    std::vector<double> noise_samples{5, 10, 25, 50};
    std::vector<double> noise_features{5, 10, 25, 50, 75};
    std::vector<Variant> noise_variants{Variant::ord_vae, Variant::ord_phy_r, Variant::nf_phy_r,
                                        Variant::att_nf_phy_r};
    bool noise_control = true;
    std::vector<std::string> ablation_cells;  // empty: all

    std::filesystem::path output_dir = "out";
    bool report_degrees = false;
    bool save_checkpoints = true;
};

/// Key/value structured text (JSON). Unknown keys throw std::invalid_argument.
std::string config_to_json(const ExperimentConfig& cfg);
void apply_config_json(ExperimentConfig& cfg, const std::string& text);
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});
/// Hash of every field except the output location, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Samples, split, statistics and the normalized matrices of one invocation.
struct PreparedData {
    std::string source;
    std::vector<GaitSample> samples;
    DatasetSplit split;
    NormalizationStats stats;
    Tensor train;
    Tensor validation;
    Tensor test;
};

PreparedData prepare_data(const ExperimentConfig& cfg);
/// Matches model.time_points and the grid to the data length.
ModelConfig model_config_for(const ExperimentConfig& cfg, const PreparedData& data);

/// One training job. α and β are already resolved for the cell.
struct TrainSpec {
    std::string variant;  // tag stored in checkpoints and results
    std::string cell = "base";
    ModelConfig model;
    std::size_t epochs = 50;
    std::size_t batch_size = 100;
    AdamConfig adam;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::optional<NoiseSpec> noise;
    bool validate_each_epoch = true;
};

struct StepRecord {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    LossBreakdown loss;
};

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown mean_loss;
    double validation_mae = 0.0;
};

struct TrainResult {
    HybridModel model;
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    double wall_seconds = 0.0;
};

/// Shuffled mini-batch Adam on total_loss. Non-finite losses raise
/// DivergenceError naming the epoch and batch.
TrainResult train_model(const TrainSpec& spec, const Tensor& train, const Tensor& validation);

/// Mean |x - reconstruct(x)| over every entry, reconstructing `batch_size`
/// rows at a time. Throws EmptyBatchError on an empty set.
double evaluate_mae(const Tensor& x, const std::function<Tensor(const Tensor&)>& reconstructor,
                    std::size_t batch_size);
double evaluate_mae(const HybridModel& model, const Tensor& x, std::size_t batch_size);
/// Same in original units, via the inverse z-score.
double evaluate_mae_degrees(const HybridModel& model, const Tensor& x, std::size_t batch_size,
                            const NormalizationStats& stats);

struct ResultRecord {
    std::string config_hash;
    std::string variant;
    std::string cell;
    std::uint64_t seed = 0;
    double pct_samples = 0.0;  // 0 when clean
    double pct_features = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    std::size_t epochs = 0;
    LossBreakdown final_loss;
    double final_validation_mae = 0.0;
    double test_mae = 0.0;
    double test_mae_degrees = 0.0;  // NaN unless requested
    std::string checkpoint;
    double wall_seconds = 0.0;      // kept out of result CSVs
    std::vector<EpochRecord> epoch_records;
    std::vector<StepRecord> step_records;
};

/// Trains, evaluates on the test set and optionally writes the checkpoint.
ResultRecord run_job(const ExperimentConfig& cfg, const PreparedData& data, const TrainSpec& spec,
                     const std::string& suite);

std::vector<ResultRecord> run_variant_suite(const ExperimentConfig& cfg, const PreparedData& data);

struct NoiseCell {
    std::string variant;
    double pct_samples = 0.0;
    double pct_features = 0.0;
    double mean_mae = 0.0;
};

struct NoiseSweepResult {
    std::vector<ResultRecord> runs;
    std::vector<NoiseCell> cells;  // seed means, control first per variant
};

NoiseSweepResult noise_sweep(const ExperimentConfig& cfg, const PreparedData& data);
/// Spearman rank correlation with average ranks for ties; NaN when either
/// side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct AblationCell {
    std::string table;  // latents_single, latents_mixed, latents_nf_att, regularizers
    std::string name;
    Posterior aux;
    Posterior phys;
    double alpha;
    double beta;
};

/// The 16 cells: 4 single-latent, 4 NF/Att-NF with MLP-Gaussian, 2 NF with
/// Att-NF, 6 regularizer knockouts.
std::vector<AblationCell> ablation_cells(const ExperimentConfig& cfg);
std::vector<ResultRecord> ablation_suite(const ExperimentConfig& cfg, const PreparedData& data);

/// Tag for checkpoints of arbitrary branch families, e.g. "aux=flow;phys=none".
std::string family_tag(const ModelConfig& m);
/// Rebuilds the branch families from a variant name or family tag.
ModelConfig model_config_for_tag(const std::string& tag, ModelConfig base);

// CSV output. Doubles use the shortest round-trip form.
std::string format_double(double v);
void write_runs_csv(const std::filesystem::path& path, const std::vector<ResultRecord>& runs);
std::vector<ResultRecord> read_runs_csv(const std::filesystem::path& path);
void write_steps_csv(const std::filesystem::path& path, const std::vector<ResultRecord>& runs);
void write_epochs_csv(const std::filesystem::path& path, const std::vector<ResultRecord>& runs);
/// variant, cell, seed, metric, value.
void write_long_csv(const std::filesystem::path& path, const std::vector<ResultRecord>& runs);
/// One row per variant: mean and population stddev of test MAE over seeds.
void write_suite_table(const std::filesystem::path& path, const std::vector<ResultRecord>& runs);
/// Per-variant grids (rows: % samples, columns: % features) and row trends.
void write_noise_tables(const std::filesystem::path& dir, const ExperimentConfig& cfg, const NoiseSweepResult& r);
void write_ablation_table(const std::filesystem::path& path, const std::vector<AblationCell>& cells,
                          const std::vector<ResultRecord>& runs);
void write_dataset_manifest(const std::filesystem::path& path, const PreparedData& data);

}  // namespace phyvae
