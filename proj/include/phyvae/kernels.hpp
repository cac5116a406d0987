#pragma once

#include <cstddef>

// Dense matrix-product kernels on row-major buffers.
//
// `serial` holds plain triple-loop references kept for verification and
// benchmarking. The unqualified versions are register-blocked and split
// column panels across OpenMP threads; every output element is accumulated
// in the same order regardless of thread count, so results are reproducible.
namespace phyvae::kernels {

namespace serial {
void matmul(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void matmul_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void matmul_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
}  // namespace serial

/// c[n,m] = a[n,k] * b[k,m]
void matmul(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
/// c[n,m] = a[n,k] * b[m,k]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
/// c[n,m] = a[k,n]^T * b[k,m]
void matmul_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);

/// Threads OpenMP would use for a parallel region (1 without OpenMP).
int max_threads();

}  // namespace phyvae::kernels
