#include "phyvae/kernels.hpp"

#include <algorithm>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace phyvae::kernels {

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
            c[i * m + j] = s;
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * m + j] = s;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[p * n + i] * b[p * m + j];
            c[i * m + j] = s;
        }
    }
}

}  // namespace serial

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 16;

// One kColBlock-wide column panel of c. `panel` is b[:, j0:j0+width] packed
// contiguously as k rows of kColBlock (zero padded past `width`).
void panel_product(const double* __restrict a, const double* __restrict panel, double* __restrict c,
                   std::size_t n, std::size_t k, std::size_t m, std::size_t j0, std::size_t width) {
    std::size_t i = 0;
    for (; i + kRowBlock <= n; i += kRowBlock) {
        double acc[kRowBlock][kColBlock] = {};
        const double* a0 = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = panel + p * kColBlock;
            for (std::size_t r = 0; r < kRowBlock; ++r) {
                const double av = a0[r * k + p];
#pragma omp simd
                for (std::size_t s = 0; s < kColBlock; ++s) acc[r][s] += av * bp[s];
            }
        }
        for (std::size_t r = 0; r < kRowBlock; ++r)
            for (std::size_t s = 0; s < width; ++s) c[(i + r) * m + j0 + s] = acc[r][s];
    }
    for (; i < n; ++i) {
        double acc[kColBlock] = {};
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = panel + p * kColBlock;
#pragma omp simd
            for (std::size_t s = 0; s < kColBlock; ++s) acc[s] += av * bp[s];
        }
        for (std::size_t s = 0; s < width; ++s) c[i * m + j0 + s] = acc[s];
    }
}

// b_at(p, j) addresses b so the same driver serves b and b^T.
template <class BAccess>
void blocked_product(const double* a, BAccess b_at, double* c, std::size_t n, std::size_t k, std::size_t m) {
    const std::size_t panels = (m + kColBlock - 1) / kColBlock;
#pragma omp parallel
    {
        std::vector<double> panel(k * kColBlock);
#pragma omp for schedule(static)
        for (std::ptrdiff_t jp = 0; jp < static_cast<std::ptrdiff_t>(panels); ++jp) {
            const std::size_t j0 = static_cast<std::size_t>(jp) * kColBlock;
            const std::size_t width = std::min(kColBlock, m - j0);
            for (std::size_t p = 0; p < k; ++p) {
                double* dst = panel.data() + p * kColBlock;
                std::size_t s = 0;
                for (; s < width; ++s) dst[s] = b_at(p, j0 + s);
                for (; s < kColBlock; ++s) dst[s] = 0.0;
            }
            panel_product(a, panel.data(), c, n, k, m, j0, width);
        }
    }
}

// Narrow outputs waste most of a zero-padded panel; plain dot products win.
constexpr std::size_t kNarrow = 4;

inline double dot(const double* __restrict x, const double* __restrict y, std::size_t k) {
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t p = 0; p < k; ++p) s += x[p] * y[p];
    return s;
}

// c[n, m] = a[n, k] * bt[m, k]^T with bt row-major.
void rows_dot(const double* a, const double* bt, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) c[i * m + j] = dot(a + i * k, bt + j * k, k);
}

void outer(const double* a, const double* b, double* c, std::size_t n, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double av = a[i];
#pragma omp simd
        for (std::size_t j = 0; j < m; ++j) c[i * m + j] = av * b[j];
    }
}

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    if (k == 1) {
        outer(a, b, c, n, m);
        return;
    }
    if (m <= kNarrow) {
        std::vector<double> bt(m * k);
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < m; ++j) bt[j * k + p] = b[p * m + j];
        rows_dot(a, bt.data(), c, n, k, m);
        return;
    }
    blocked_product(a, [b, m](std::size_t p, std::size_t j) { return b[p * m + j]; }, c, n, k, m);
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    if (k == 1) {
        outer(a, b, c, n, m);
        return;
    }
    if (m <= kNarrow) {
        rows_dot(a, b, c, n, k, m);
        return;
    }
    blocked_product(a, [b, k](std::size_t p, std::size_t j) { return b[j * k + p]; }, c, n, k, m);
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    if (m <= kNarrow) {
        // Columns of a and b are strided; accumulate along contiguous rows of a.
        std::fill(c, c + n * m, 0.0);
        std::vector<double> col(n);
        for (std::size_t j = 0; j < m; ++j) {
            std::fill(col.begin(), col.end(), 0.0);
            for (std::size_t p = 0; p < k; ++p) {
                const double bv = b[p * m + j];
                const double* ap = a + p * n;
#pragma omp simd
                for (std::size_t i = 0; i < n; ++i) col[i] += ap[i] * bv;
            }
            for (std::size_t i = 0; i < n; ++i) c[i * m + j] = col[i];
        }
        return;
    }
    if (n <= kNarrow) {
        std::fill(c, c + n * m, 0.0);
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < n; ++i) {
                const double av = a[p * n + i];
                const double* bp = b + p * m;
                double* ci = c + i * m;
#pragma omp simd
                for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
            }
        return;
    }
    // Transpose a once so the row-block micro-kernel reads contiguous rows.
    std::vector<double> at(n * k);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        for (std::size_t p = 0; p < k; ++p) at[static_cast<std::size_t>(i) * k + p] = a[p * n + i];
    matmul(at.data(), b, c, n, k, m);
}

int max_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace phyvae::kernels
