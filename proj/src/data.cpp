#include "phyvae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "phyvae/errors.hpp"

namespace phyvae {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

int channel_index(std::string_view tag) {
    for (std::size_t c = 0; c < kChannelTags.size(); ++c)
        if (kChannelTags[c] == tag) return static_cast<int>(c);
    return -1;
}

struct PendingSample {
    std::string id;
    std::array<std::vector<double>, kGaitChannels> rows;
    std::array<bool, kGaitChannels> seen{};
    bool duplicate = false;
};

}  // namespace

GaitLoadResult load_gait_csv(const std::filesystem::path& path, std::size_t points) {
    std::ifstream in(path);
    if (!in) throw DataError(0, "cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw DataError(1, "missing header row");
    ++line_no;

    std::vector<PendingSample> pending;
    std::map<std::string, std::size_t, std::less<>> by_id;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != points + 2)
            throw DataError(line_no, "expected " + std::to_string(points + 2) + " cells, found " +
                                         std::to_string(cells.size()));
        const std::string id(trim(cells[0]));
        if (id.empty()) throw DataError(line_no, "empty sample id");
        const int ch = channel_index(trim(cells[1]));
        if (ch < 0) throw DataError(line_no, "unknown channel tag '" + std::string(trim(cells[1])) + "'");
        std::vector<double> values(points);
        for (std::size_t i = 0; i < points; ++i) {
            const std::string_view cell = trim(cells[i + 2]);
            const char* end = cell.data() + cell.size();
            auto [ptr, ec] = std::from_chars(cell.data(), end, values[i]);
            if (ec != std::errc() || ptr != end || cell.empty())
                throw DataError(line_no, "non-numeric value '" + std::string(cell) + "' in column " +
                                             std::to_string(i + 3));
            if (!std::isfinite(values[i])) throw DataError(line_no, "non-finite value in column " + std::to_string(i + 3));
        }
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            it = by_id.emplace(id, pending.size()).first;
            pending.push_back(PendingSample{id, {}, {}, false});
        }
        PendingSample& s = pending[it->second];
        if (s.seen[ch]) s.duplicate = true;
        s.seen[ch] = true;
        s.rows[ch] = std::move(values);
    }

    GaitLoadResult result;
    for (auto& s : pending) {
        if (s.duplicate) {
            result.rejected.push_back({s.id, "repeated channel row"});
            continue;
        }
        std::string missing;
        for (std::size_t c = 0; c < kGaitChannels; ++c)
            if (!s.seen[c]) missing += (missing.empty() ? "" : ", ") + std::string(kChannelTags[c]);
        if (!missing.empty()) {
            result.rejected.push_back({s.id, "missing channel: " + missing});
            continue;
        }
        Tensor angles({kGaitChannels, points});
        for (std::size_t c = 0; c < kGaitChannels; ++c)
            std::copy(s.rows[c].begin(), s.rows[c].end(), angles.data().begin() + c * points);
        result.samples.push_back({s.id, std::move(angles)});
    }
    return result;
}

void write_gait_csv(const std::filesystem::path& path, const std::vector<GaitSample>& samples) {
    std::ofstream out(path);
    if (!out) throw DataError(0, "cannot write " + path.string());
    const std::size_t points = samples.empty() ? kGaitPoints : samples.front().points();
    out << "id,channel";
    for (std::size_t i = 0; i < points; ++i) out << ",t" << i;
    out << '\n';
    char buf[64];
    for (const auto& s : samples) {
        if (s.angles.rows() != kGaitChannels || s.points() != points)
            throw DimensionError("write_gait_csv: sample " + s.id + " has shape " + shape_string(s.angles.shape()));
        for (std::size_t c = 0; c < kGaitChannels; ++c) {
            out << s.id << ',' << kChannelTags[c];
            for (std::size_t i = 0; i < points; ++i) {
                auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, s.angles.at(c, i));
                out << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
            }
            out << '\n';
        }
    }
}

std::vector<GaitSample> synth_generate(const SynthConfig& config, const SynthChannelMap& map,
                                       const SynthResidual& residual) {
    if (config.count < 1) throw std::invalid_argument("synth_generate needs at least one sample");
    if (config.points < 2) throw std::invalid_argument("synth_generate needs at least two time points");
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> amp(config.amplitude_min, config.amplitude_max);
    std::uniform_real_distribution<double> jitter(-config.phase_jitter, config.phase_jitter);
    std::normal_distribution<double> weight(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    const double w2 = config.omega * config.omega;
    const std::size_t sub = std::max<std::size_t>(1, config.integration_substeps);
    const double h = 1.0 / static_cast<double>((config.points - 1) * sub);
    auto accel = [w2](double q) { return -w2 * std::sin(q); };

    std::vector<GaitSample> out;
    out.reserve(config.count);
    for (std::size_t n = 0; n < config.count; ++n) {
        const double a = amp(rng);
        const double phi = jitter(rng);
        const std::array<double, 2> rw{weight(rng) * config.residual_scale, weight(rng) * config.residual_scale};

        double q = a * std::cos(phi);
        double v = -a * config.omega * std::sin(phi);
        Tensor angles({kGaitChannels, config.points});
        for (std::size_t i = 0; i < config.points; ++i) {
            if (i > 0) {
                for (std::size_t s = 0; s < sub; ++s) {
                    const double k1q = v, k1v = accel(q);
                    const double k2q = v + 0.5 * h * k1v, k2v = accel(q + 0.5 * h * k1q);
                    const double k3q = v + 0.5 * h * k2v, k3v = accel(q + 0.5 * h * k2q);
                    const double k4q = v + h * k3v, k4v = accel(q + h * k3q);
                    q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
                    v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                }
            }
            const double t = static_cast<double>(i) / static_cast<double>(config.points - 1);
            const double p = v / config.omega;
            for (std::size_t c = 0; c < kGaitChannels; ++c) {
                double value = map.offset[c] + map.q_gain[c] * q + map.p_gain[c] * p;
                for (std::size_t r = 0; r < 2; ++r)
                    value += rw[r] * residual.amplitude[r][c] *
                             std::sin(2.0 * M_PI * residual.cycles[r] * t + residual.phase[r][c]);
                angles.at(c, i) = value;
            }
        }
        // Noise is drawn after the trajectory so toggling it leaves the clean signal unchanged.
        for (double& x : angles.data()) x += config.noise_stddev * noise(rng);
        out.push_back({"s" + std::to_string(n), std::move(angles)});
    }
    return out;
}

DatasetSplit make_split(std::size_t n, const SplitSizes& sizes, std::uint64_t seed) {
    const std::size_t need = sizes.train + sizes.validation + sizes.test;
    if (need > n)
        throw std::invalid_argument("split needs " + std::to_string(need) + " samples, source has " +
                                    std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
    DatasetSplit split;
    split.seed = seed;
    auto it = idx.begin();
    split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes.train));
    it += static_cast<std::ptrdiff_t>(sizes.train);
    split.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes.validation));
    it += static_cast<std::ptrdiff_t>(sizes.validation);
    split.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes.test));
    return split;
}

NormalizationStats fit_normalization(const std::vector<GaitSample>& samples, const std::vector<std::size_t>& train) {
    if (train.empty()) throw DataError(0, "cannot fit normalization on an empty train set");
    NormalizationStats stats;
    for (std::size_t c = 0; c < kGaitChannels; ++c) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i : train) {
            const Tensor& a = samples.at(i).angles;
            for (std::size_t t = 0; t < a.cols(); ++t) sum += a.at(c, t);
            count += a.cols();
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t i : train) {
            const Tensor& a = samples[i].angles;
            for (std::size_t t = 0; t < a.cols(); ++t) ss += (a.at(c, t) - mean) * (a.at(c, t) - mean);
        }
        const double var = ss / static_cast<double>(count);
        if (!(var > 0.0)) throw DataError(0, "channel " + std::string(kChannelTags[c]) + " has zero variance");
        stats.mean[c] = mean;
        stats.stddev[c] = std::sqrt(var);
    }
    return stats;
}

Tensor to_model_matrix(const std::vector<GaitSample>& samples, const std::vector<std::size_t>& indices,
                       const NormalizationStats& stats) {
    if (indices.empty()) return Tensor({0, 0});
    const std::size_t points = samples.at(indices.front()).points();
    Tensor x({indices.size(), points * kGaitChannels});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const Tensor& a = samples.at(indices[r]).angles;
        if (a.cols() != points) throw DimensionError("samples differ in length");
        for (std::size_t t = 0; t < points; ++t)
            for (std::size_t c = 0; c < kGaitChannels; ++c)
                x.at(r, t * kGaitChannels + c) = (a.at(c, t) - stats.mean[c]) / stats.stddev[c];
    }
    return x;
}

Tensor normalize(const Tensor& x, const NormalizationStats& stats) {
    if (x.cols() % kGaitChannels != 0) throw DimensionError("normalize: width is not a multiple of 3");
    Tensor y = x;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const std::size_t c = (i % x.cols()) % kGaitChannels;
        y[i] = (x[i] - stats.mean[c]) / stats.stddev[c];
    }
    return y;
}

Tensor denormalize(const Tensor& x, const NormalizationStats& stats) {
    if (x.cols() % kGaitChannels != 0) throw DimensionError("denormalize: width is not a multiple of 3");
    Tensor y = x;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const std::size_t c = (i % x.cols()) % kGaitChannels;
        y[i] = x[i] * stats.stddev[c] + stats.mean[c];
    }
    return y;
}

void NoiseSpec::validate() const {
    auto ok = [](double p) { return p > 0.0 && p <= 100.0; };
    if (!ok(pct_samples) || !ok(pct_features))
        throw std::invalid_argument("noise percentages must lie in (0, 100]");
}

std::size_t noise_count(double pct, std::size_t n) {
    return static_cast<std::size_t>(std::floor(pct * static_cast<double>(n) / 100.0 + 0.5));
}

namespace {

// First k entries of a uniformly shuffled [0, n), sorted.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

NoiseMask sample_noise_mask(std::size_t rows, std::size_t features, const NoiseSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    NoiseMask m;
    m.mask = Tensor({rows, features}, 1.0);
    const std::size_t nrows = std::min(rows, noise_count(spec.pct_samples, rows));
    m.features_per_row = std::min(features, noise_count(spec.pct_features, features));
    if (nrows == 0) {
        m.noop = true;
        return m;
    }
    m.rows = choose(rows, nrows, rng);
    for (std::size_t r : m.rows)
        for (std::size_t f : choose(features, m.features_per_row, rng)) m.mask.at(r, f) = 0.0;
    return m;
}

CorruptedFeatures inject_feature_noise(const Tensor& features, const NoiseSpec& spec, std::mt19937_64& rng) {
    CorruptedFeatures out{features, sample_noise_mask(features.rows(), features.cols(), spec, rng)};
    if (out.mask.noop) {
        std::cerr << "warning: noise spec (" << spec.pct_samples << "% samples) selects no rows in a batch of "
                  << features.rows() << "\n";
        return out;
    }
    for (std::size_t i = 0; i < out.features.numel(); ++i) out.features[i] *= out.mask.mask[i];
    return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    nlohmann::ordered_json j;
    j["source"] = manifest.source;
    j["sample_count"] = manifest.sample_count;
    j["split_seed"] = manifest.split.seed;
    j["channels"] = std::vector<std::string>(kChannelTags.begin(), kChannelTags.end());
    j["mean"] = manifest.stats.mean;
    j["stddev"] = manifest.stats.stddev;
    j["train"] = manifest.split.train;
    j["validation"] = manifest.split.validation;
    j["test"] = manifest.split.test;
    std::ofstream out(path);
    if (!out) throw DataError(0, "cannot write " + path.string());
    out << j.dump(1) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(0, "cannot open " + path.string());
    DatasetManifest m;
    try {
        const auto j = nlohmann::json::parse(in);
        m.source = j.at("source").get<std::string>();
        m.sample_count = j.at("sample_count").get<std::size_t>();
        m.split.seed = j.at("split_seed").get<std::uint64_t>();
        m.stats.mean = j.at("mean").get<std::array<double, kGaitChannels>>();
        m.stats.stddev = j.at("stddev").get<std::array<double, kGaitChannels>>();
        m.split.train = j.at("train").get<std::vector<std::size_t>>();
        m.split.validation = j.at("validation").get<std::vector<std::size_t>>();
        m.split.test = j.at("test").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(0, "bad manifest " + path.string() + ": " + e.what());
    }
    return m;
}

}  // namespace phyvae
