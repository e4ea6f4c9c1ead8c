// Compiled with -mavx2 -mfma. Only kernel_table.hpp and intrinsics may be
// included here so no inline code built for AVX2 leaks into generic paths.
#include <immintrin.h>

#include "lmcal/kernel_table.hpp"

namespace lmcal::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// Rows of C are updated four k-slices at a time to cut C traffic.
void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * lda;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
            const __m256d a0 = _mm256_set1_pd(arow[p]);
            const __m256d a1 = _mm256_set1_pd(arow[p + 1]);
            const __m256d a2 = _mm256_set1_pd(arow[p + 2]);
            const __m256d a3 = _mm256_set1_pd(arow[p + 3]);
            const double* b0 = b + p * ldb;
            const double* b1 = b0 + ldb;
            const double* b2 = b1 + ldb;
            const double* b3 = b2 + ldb;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d acc = _mm256_loadu_pd(crow + j);
                acc = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), acc);
                acc = _mm256_fmadd_pd(a1, _mm256_loadu_pd(b1 + j), acc);
                acc = _mm256_fmadd_pd(a2, _mm256_loadu_pd(b2 + j), acc);
                acc = _mm256_fmadd_pd(a3, _mm256_loadu_pd(b3 + j), acc);
                _mm256_storeu_pd(crow + j, acc);
            }
            for (; j < n; ++j)
                crow[j] += arow[p] * b0[j] + arow[p + 1] * b1[j] + arow[p + 2] * b2[j] + arow[p + 3] * b3[j];
        }
        for (; p < k; ++p) axpy_avx2(arow[p], b + p * ldb, crow, n);
    }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        double* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot_avx2(arow, b + j * ldb, k);
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    if (!accumulate)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) c[p * ldc + j] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        const double* brow = b + i * ldb;
        for (std::size_t p = 0; p < k; ++p) {
            if (arow[p] == 0.0) continue;
            axpy_avx2(arow[p], brow, c + p * ldc, n);
        }
    }
}

} // namespace

const KernelTable* avx2_table() {
    static const KernelTable table{dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2};
    return &table;
}

} // namespace lmcal::kernels
