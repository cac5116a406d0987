#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "phyvae/attention.hpp"

namespace oracle {

using phyvae::AttentionParams;
using phyvae::ParamId;
using phyvae::ParameterSet;
using phyvae::Tensor;

// a[x_m, x_n] v_m summed term by term.
Tensor pairwise(const ParameterSet& p, const AttentionParams& a, const Tensor& x) {
    const std::size_t n = x.rows(), d = x.cols();
    auto proj = [&](ParamId w, ParamId b, std::size_t row) {
        std::vector<double> out(d);
        for (std::size_t i = 0; i < d; ++i) {
            out[i] = p.value(b)[i];
            for (std::size_t j = 0; j < d; ++j) out[i] += p.value(w).at(i, j) * x.at(row, j);
        }
        return out;
    };
    Tensor out({n, d});
    for (std::size_t q = 0; q < n; ++q) {
        const auto qv = proj(a.omega_q, a.beta_q, q);
        std::vector<double> logit(n);
        for (std::size_t m = 0; m < n; ++m) {
            const auto kv = proj(a.omega_k, a.beta_k, m);
            logit[m] = 0.0;
            for (std::size_t i = 0; i < d; ++i) logit[m] += kv[i] * qv[i];
            logit[m] /= std::sqrt(static_cast<double>(d));
        }
        const double top = *std::max_element(logit.begin(), logit.end());
        double z = 0.0;
        for (double l : logit) z += std::exp(l - top);
        for (std::size_t m = 0; m < n; ++m) {
            const double weight = std::exp(logit[m] - top) / z;
            const auto vv = proj(a.omega_v, a.beta_v, m);
            for (std::size_t i = 0; i < d; ++i) out.at(q, i) += weight * vv[i];
        }
    }
    return out;
}

}  // namespace oracle
