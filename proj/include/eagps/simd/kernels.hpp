#pragma once

// Dense inner-loop kernels. Every kernel has a scalar reference version and
// optionally an AVX2 version; the active table is chosen once at first use
// from the CPU features (override with EAGPS_SIMD=scalar|avx2).

#include <cstddef>
#include <string_view>

namespace eagps::simd {

// Row-major matrices with explicit leading dimensions.
struct KernelTable {
    std::string_view name;

    double (*dot)(const double* a, const double* b, std::size_t n);

    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // C[m x n] += A[m x k] * B[k x n]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda,
                    const double* b, std::size_t ldb,
                    double* c, std::size_t ldc);

    // C[m x n] += A[m x k] * B[n x k]^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda,
                    const double* b, std::size_t ldb,
                    double* c, std::size_t ldc);

    // C[m x n] += A[k x m]^T * B[k x n]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda,
                    const double* b, std::size_t ldb,
                    double* c, std::size_t ldc);
};

const KernelTable& scalar_kernels();

// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

// The table every library routine goes through.
const KernelTable& active();

// Force a specific table ("scalar" or "avx2"); returns false if unavailable.
bool select(std::string_view name);

}  // namespace eagps::simd
