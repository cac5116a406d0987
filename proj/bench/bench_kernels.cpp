// Serial reference kernels against the blocked OpenMP kernels on the shapes a
// training step actually runs, then one full training step per variant.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "phyvae/harness.hpp"
#include "phyvae/kernels.hpp"
#include "phyvae/model.hpp"

using namespace phyvae;

namespace {

double best_of(int reps, const std::function<void()>& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

struct Shape3 {
    std::size_t n, k, m;
};

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
    std::printf("threads %d, best of %d\n", kernels::max_threads(), reps);
    std::printf("%-8s %-16s %12s %12s %8s %12s\n", "kernel", "n x k x m", "serial ms", "parallel ms", "speedup",
                "max |diff|");

    std::mt19937_64 rng(0);
    std::normal_distribution<double> nd;
    const std::vector<Shape3> shapes{{100, 300, 512}, {100, 512, 512}, {100, 512, 300}, {100, 128, 2},
                                     {400, 512, 512}, {1, 512, 512},   {512, 100, 512}};
    using Kernel = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    struct Pair {
        const char* name;
        Kernel serial;
        Kernel parallel;
    };
    const Pair pairs[] = {{"nn", kernels::serial::matmul, kernels::matmul},
                          {"nt", kernels::serial::matmul_nt, kernels::matmul_nt},
                          {"tn", kernels::serial::matmul_tn, kernels::matmul_tn}};
    for (const auto& p : pairs)
        for (const auto& s : shapes) {
            std::vector<double> a(s.n * s.k), b(s.k * s.m), c1(s.n * s.m), c2(s.n * s.m);
            for (double& v : a) v = nd(rng);
            for (double& v : b) v = nd(rng);
            const double ts = best_of(reps, [&] { p.serial(a.data(), b.data(), c1.data(), s.n, s.k, s.m); });
            const double tp = best_of(reps, [&] { p.parallel(a.data(), b.data(), c2.data(), s.n, s.k, s.m); });
            double diff = 0.0;
            for (std::size_t i = 0; i < c1.size(); ++i) diff = std::max(diff, std::abs(c1[i] - c2[i]));
            char dims[32];
            std::snprintf(dims, sizeof dims, "%zux%zux%zu", s.n, s.k, s.m);
            std::printf("%-8s %-16s %12.3f %12.3f %8.2f %12.3g\n", p.name, dims, ts * 1e3, tp * 1e3, ts / tp, diff);
        }

    // One optimizer step on a full-size batch of 100 synthetic strides.
    ExperimentConfig cfg;
    cfg.synth.count = 100;
    cfg.split = {100, 0, 0};
    const PreparedData data = prepare_data(cfg);
    std::printf("\n%-10s %12s\n", "variant", "step ms");
    for (Variant v : kAllVariants) {
        TrainSpec spec;
        spec.variant = std::string(variant_name(v));
        spec.model = variant_config(v, model_config_for(cfg, data));
        spec.epochs = 1;
        spec.batch_size = 100;
        spec.validate_each_epoch = false;
        const double t = best_of(std::max(1, reps / 2), [&] { train_model(spec, data.train, data.validation); });
        std::printf("%-10s %12.1f\n", spec.variant.c_str(), t * 1e3);
    }
    return 0;
}
