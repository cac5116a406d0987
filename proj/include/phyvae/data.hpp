#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "phyvae/tensor.hpp"

namespace phyvae {

inline constexpr std::size_t kGaitChannels = 3;
inline constexpr std::size_t kGaitPoints = 100;
inline constexpr std::array<std::string_view, kGaitChannels> kChannelTags{"hip", "knee", "ankle"};

/// One stride: angles [3, T] (hip, knee, ankle) in degrees.
struct GaitSample {
    std::string id;
    Tensor angles;

    std::size_t points() const { return angles.cols(); }
};

struct SampleRejection {
    std::string id;
    std::string reason;
};

struct GaitLoadResult {
    std::vector<GaitSample> samples;
    std::vector<SampleRejection> rejected;
};

/// Reads the long CSV layout: a header row, then `id,channel,v1,...,vT` rows.
/// Malformed rows throw DataError with the line number; samples that lack a
/// channel (or repeat one) are skipped and listed in `rejected`.
GaitLoadResult load_gait_csv(const std::filesystem::path& path, std::size_t points = kGaitPoints);
/// Writes samples in the layout load_gait_csv reads, with round-trip precision.
void write_gait_csv(const std::filesystem::path& path, const std::vector<GaitSample>& samples);

/// Synthetic strides: a pendulum trajectory (per-sample amplitude and phase
/// jitter, shared angular frequency) through a fixed affine map, plus two
/// fixed higher harmonics with per-sample weights, plus Gaussian noise.
struct SynthConfig {
    std::size_t count = 844;
    std::uint64_t seed = 0;
    std::size_t points = kGaitPoints;
    double omega = 6.283185307179586;  // one oscillation over the stride
    double amplitude_min = 0.4;        // rad
    double amplitude_max = 1.2;
    double phase_jitter = 0.3;         // uniform in [-j, j] rad
    double residual_scale = 1.0;       // stddev of the per-sample harmonic weights
    double noise_stddev = 0.1;
    std::size_t integration_substeps = 20;
};

/// Per-channel affine map from the pendulum state (q, p / omega) to degrees.
struct SynthChannelMap {
    std::array<double, kGaitChannels> q_gain{25.0, 30.0, 10.0};
    std::array<double, kGaitChannels> p_gain{5.0, -20.0, 8.0};
    std::array<double, kGaitChannels> offset{10.0, 30.0, 0.0};
};

/// Harmonic residual patterns: 3 and 5 cycles per stride.
struct SynthResidual {
    std::array<double, 2> cycles{3.0, 5.0};
    std::array<std::array<double, kGaitChannels>, 2> amplitude{{{4.0, 6.0, 3.0}, {2.0, 3.0, 2.5}}};
    std::array<std::array<double, kGaitChannels>, 2> phase{{{0.0, 1.0, 2.0}, {0.5, 1.5, 2.5}}};
};

std::vector<GaitSample> synth_generate(const SynthConfig& config, const SynthChannelMap& map = {},
                                       const SynthResidual& residual = {});

struct SplitSizes {
    std::size_t train = 400;
    std::size_t validation = 100;
    std::size_t test = 344;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

/// Shuffles [0, n) with `seed` and cuts it into disjoint sets. Throws
/// std::invalid_argument when the sizes exceed n.
DatasetSplit make_split(std::size_t n, const SplitSizes& sizes, std::uint64_t seed);

/// Per-channel z-score statistics (population variance over all train points).
struct NormalizationStats {
    std::array<double, kGaitChannels> mean{};
    std::array<double, kGaitChannels> stddev{};
};

/// Statistics from the samples listed in `train`. Throws DataError on an
/// empty train set or a zero-variance channel.
NormalizationStats fit_normalization(const std::vector<GaitSample>& samples, const std::vector<std::size_t>& train);

/// Normalized samples flattened time-major: row n, column tau * 3 + channel.
Tensor to_model_matrix(const std::vector<GaitSample>& samples, const std::vector<std::size_t>& indices,
                       const NormalizationStats& stats);
/// Inverse of the z-score on a time-major [N, T * 3] matrix.
Tensor denormalize(const Tensor& x, const NormalizationStats& stats);
Tensor normalize(const Tensor& x, const NormalizationStats& stats);

/// Zero `pct_features`% of the features in `pct_samples`% of the rows.
struct NoiseSpec {
    double pct_samples = 0.0;
    double pct_features = 0.0;

    /// Throws std::invalid_argument unless both lie in (0, 100].
    void validate() const;
};

/// round-half-up(pct * n / 100).
std::size_t noise_count(double pct, std::size_t n);

struct NoiseMask {
    Tensor mask;                        // [N, F], 0 at corrupted entries, 1 elsewhere
    std::vector<std::size_t> rows;      // corrupted rows, ascending
    std::size_t features_per_row = 0;
    bool noop = false;                  // no row selected after rounding
};

NoiseMask sample_noise_mask(std::size_t rows, std::size_t features, const NoiseSpec& spec, std::mt19937_64& rng);

struct CorruptedFeatures {
    Tensor features;
    NoiseMask mask;
};

/// Applies a freshly sampled mask; a no-op selection returns the input
/// unchanged and prints a warning.
CorruptedFeatures inject_feature_noise(const Tensor& features, const NoiseSpec& spec, std::mt19937_64& rng);

/// Structured-text record of a prepared dataset.
struct DatasetManifest {
    std::string source;
    std::size_t sample_count = 0;
    DatasetSplit split;
    NormalizationStats stats;
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace phyvae
