#include "phyvae/adam.hpp"

#include <cmath>

#include "phyvae/errors.hpp"

namespace phyvae {

AdamState::AdamState(const ParameterSet& params, AdamConfig cfg) : config(cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        first_moment.emplace_back(params.value(i).shape());
        second_moment.emplace_back(params.value(i).shape());
    }
}

void adam_step(AdamState& state, ParameterSet& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size())
        throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params.size()) + " parameters");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!grads[i].same_shape(params.value(i)) || !state.first_moment[i].same_shape(params.value(i)))
            throw DimensionError("adam_step: shape mismatch for " + params.path(i));

    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* theta = params.value(i).data().data();
        double* m = state.first_moment[i].data().data();
        double* v = state.second_moment[i].data().data();
        const double* g = grads[i].data().data();
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(grads[i].numel());
#pragma omp parallel for schedule(static) if (n > 65536)
        for (std::ptrdiff_t j = 0; j < n; ++j) {
            const double gj = g[j] + c.weight_decay * theta[j];
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
            theta[j] -= c.learning_rate * (m[j] / bias1) / (std::sqrt(v[j] / bias2) + c.epsilon);
        }
    }
}

}  // namespace phyvae
