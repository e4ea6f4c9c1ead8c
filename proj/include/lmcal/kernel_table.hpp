#pragma once

// Plain function-pointer table shared by every kernel variant. This header
// must stay free of inline functions: it is included by translation units
// compiled with ISA-specific flags.

#include <cstddef>

namespace lmcal::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // C (+)= A[M×K] · B[K×N]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
    // C (+)= A[M×K] · B[N×K]ᵀ
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
    // C[K×N] (+)= A[M×K]ᵀ · B[M×N]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
};

} // namespace lmcal::kernels
