#pragma once

#include <cstddef>
#include <vector>

#include "phyvae/nn.hpp"
#include "phyvae/tensor.hpp"

namespace phyvae {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-3;
    double weight_decay = 1e-6;  // added to the gradient as weight_decay * theta
};

struct AdamState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::size_t step = 0;

    AdamState() = default;
    AdamState(const ParameterSet& params, AdamConfig cfg);
};

/// One Adam update of every parameter. `grads[i]` pairs with parameter i.
void adam_step(AdamState& state, ParameterSet& params, const std::vector<Tensor>& grads);

}  // namespace phyvae
