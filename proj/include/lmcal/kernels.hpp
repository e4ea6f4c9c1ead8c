#pragma once

// Dense double-precision kernels behind the encoder's forward and backward
// passes. A scalar reference implementation is always built; an AVX2+FMA
// variant is compiled on x86 and selected at runtime when the CPU supports
// it. Setting LMCAL_ISA=scalar in the environment forces the reference path.
//
// All matrices are row-major with explicit leading dimensions.

#include <cstddef>
#include <string_view>

#include "lmcal/kernel_table.hpp"

namespace lmcal::kernels {

const KernelTable& scalar_table();
/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

/// Kernel table chosen for this process (first call resolves it).
const KernelTable& active();
Isa active_isa();
/// Overrides the runtime selection; throws ConfigError if unsupported here.
void select(Isa isa);

std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc, bool accumulate = false) {
    active().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc, bool accumulate = false) {
    active().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc, bool accumulate = false) {
    active().gemm_tn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

} // namespace lmcal::kernels
