#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the tape; everything is plain loops over doubles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "phyvae/nn.hpp"
#include "phyvae/tensor.hpp"

namespace oracle {

using phyvae::Tensor;

inline Tensor triple_loop_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor c({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
            c[i * m + j] = s;
        }
    return c;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-12) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Central differences of `loss` with respect to every entry of `x`.
inline Tensor finite_difference(Tensor& x, const std::function<double()>& loss, double h = 1e-5) {
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = loss();
        x[i] = saved - h;
        const double down = loss();
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Central-difference Jacobian of f: R^D -> R^D at z.
inline std::vector<std::vector<double>> numerical_jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                                           std::vector<double> z, double h = 1e-6) {
    const std::size_t d = z.size();
    std::vector<std::vector<double>> j(d, std::vector<double>(d));
    for (std::size_t c = 0; c < d; ++c) {
        const double saved = z[c];
        z[c] = saved + h;
        const auto up = f(z);
        z[c] = saved - h;
        const auto down = f(z);
        z[c] = saved;
        for (std::size_t r = 0; r < d; ++r) j[r][c] = (up[r] - down[r]) / (2.0 * h);
    }
    return j;
}

/// Determinant by Gaussian elimination with partial pivoting.
inline double determinant(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    double det = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        if (a[piv][c] == 0.0) return 0.0;
        if (piv != c) {
            std::swap(a[piv], a[c]);
            det = -det;
        }
        det *= a[c][c];
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
        }
    }
    return det;
}

/// One planar map z + u tanh(w.z + b) on a single point, u already constrained.
inline std::vector<double> planar_point(const std::vector<double>& z, const std::vector<double>& u,
                                        const std::vector<double>& w, double b) {
    double a = b;
    for (std::size_t i = 0; i < z.size(); ++i) a += w[i] * z[i];
    const double t = std::tanh(a);
    std::vector<double> out(z);
    for (std::size_t i = 0; i < z.size(); ++i) out[i] += u[i] * t;
    return out;
}

/// Projection of u so that w.u_hat >= -1, evaluated by hand.
inline std::vector<double> constrain_point(const std::vector<double>& u, const std::vector<double>& w) {
    double wu = 0.0, ww = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        wu += w[i] * u[i];
        ww += w[i] * w[i];
    }
    const double m = -1.0 + std::log1p(std::exp(wu));
    std::vector<double> out(u);
    for (std::size_t i = 0; i < u.size(); ++i) out[i] += (m - wu) * w[i] / ww;
    return out;
}

/// Diagonal Gaussian log density of one row.
inline double gaussian_log_pdf(const std::vector<double>& x, const std::vector<double>& mean,
                               const std::vector<double>& var) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += -0.5 * (std::log(2.0 * M_PI * var[i]) + (x[i] - mean[i]) * (x[i] - mean[i]) / var[i]);
    return s;
}

/// KL(N(m, diag v) || N(0, I)).
inline double gaussian_kl(const std::vector<double>& mean, const std::vector<double>& var) {
    double s = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) s += 0.5 * (var[i] + mean[i] * mean[i] - 1.0 - std::log(var[i]));
    return s;
}

}  // namespace oracle
