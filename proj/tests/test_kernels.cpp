#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "lmcal/encoder.hpp"
#include "lmcal/error.hpp"
#include "lmcal/objectives.hpp"
#include "lmcal/kernels.hpp"
#include "support.hpp"

using namespace lmcal;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Naive triple loops used as the oracle for every table.
void naive(char op, std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a, std::size_t lda,
           const std::vector<double>& b, std::size_t ldb, std::vector<double>& c, std::size_t ldc, bool acc) {
    const std::size_t rows = op == 't' ? k : m;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long double s = 0.0L;
            if (op == 'n')
                for (std::size_t p = 0; p < k; ++p) s += (long double)a[i * lda + p] * b[p * ldb + j];
            else if (op == 'T')
                for (std::size_t p = 0; p < k; ++p) s += (long double)a[i * lda + p] * b[j * ldb + p];
            else
                for (std::size_t p = 0; p < m; ++p) s += (long double)a[p * lda + i] * b[p * ldb + j];
            c[i * ldc + j] = static_cast<double>(acc ? c[i * ldc + j] + s : s);
        }
}

void check_close(const std::vector<double>& x, const std::vector<double>& y, double tol) {
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] - y[i]) <= tol * (1.0 + std::abs(y[i])));
}

std::vector<const kernels::KernelTable*> tables() {
    std::vector<const kernels::KernelTable*> out{&kernels::scalar_table()};
    if (kernels::cpu_supports(kernels::Isa::Avx2)) out.push_back(kernels::avx2_table());
    return out;
}

} // namespace

TEST_CASE("dot and axpy agree with the oracle for every length, including tails") {
    std::mt19937_64 rng(1);
    for (const auto* t : tables())
        for (std::size_t n : {0, 1, 3, 4, 7, 8, 9, 15, 16, 17, 63, 64, 65, 257}) {
            const auto a = random_vec(n, rng), b = random_vec(n, rng);
            long double ref = 0.0L;
            for (std::size_t i = 0; i < n; ++i) ref += (long double)a[i] * b[i];
            CHECK(std::abs(t->dot(a.data(), b.data(), n) - (double)ref) <= 1e-12 * (1.0 + n));
            auto y = random_vec(n, rng);
            auto y_ref = y;
            t->axpy(0.37, a.data(), y.data(), n);
            for (std::size_t i = 0; i < n; ++i) y_ref[i] += 0.37 * a[i];
            check_close(y, y_ref, 1e-14);
        }
}

TEST_CASE("gemm variants agree with the oracle with padded leading dimensions") {
    std::mt19937_64 rng(2);
    const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {13, 17, 9}, {32, 64, 16}, {5, 33, 65}};
    for (const auto* t : tables())
        for (const auto& s : shapes)
            for (bool acc : {false, true}) {
                const std::size_t m = s[0], n = s[1], k = s[2];
                const std::size_t pad = 3;
                // gemm_nn: A m x k, B k x n
                {
                    const std::size_t lda = k + pad, ldb = n + pad, ldc = n + pad;
                    auto a = random_vec(m * lda, rng), b = random_vec(k * ldb, rng), c = random_vec(m * ldc, rng);
                    auto ref = c;
                    t->gemm_nn(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc, acc);
                    naive('n', m, n, k, a, lda, b, ldb, ref, ldc, acc);
                    check_close(c, ref, 1e-12);
                }
                // gemm_nt: A m x k, B n x k
                {
                    const std::size_t lda = k + pad, ldb = k + pad, ldc = n + pad;
                    auto a = random_vec(m * lda, rng), b = random_vec(n * ldb, rng), c = random_vec(m * ldc, rng);
                    auto ref = c;
                    t->gemm_nt(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc, acc);
                    naive('T', m, n, k, a, lda, b, ldb, ref, ldc, acc);
                    check_close(c, ref, 1e-12);
                }
                // gemm_tn: A m x k, B m x n, C k x n
                {
                    const std::size_t lda = k + pad, ldb = n + pad, ldc = n + pad;
                    auto a = random_vec(m * lda, rng), b = random_vec(m * ldb, rng), c = random_vec(k * ldc, rng);
                    auto ref = c;
                    t->gemm_tn(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc, acc);
                    naive('t', m, n, k, a, lda, b, ldb, ref, ldc, acc);
                    check_close(c, ref, 1e-12);
                }
            }
}

TEST_CASE("runtime selection switches tables and rejects unsupported ISAs") {
    const kernels::Isa initial = kernels::active_isa();
    kernels::select(kernels::Isa::Scalar);
    CHECK(kernels::active_isa() == kernels::Isa::Scalar);
    CHECK(&kernels::active() == &kernels::scalar_table());
    if (kernels::cpu_supports(kernels::Isa::Avx2)) {
        kernels::select(kernels::Isa::Avx2);
        CHECK(&kernels::active() == kernels::avx2_table());
    } else {
        CHECK_THROWS_AS(kernels::select(kernels::Isa::Avx2), ConfigError);
    }
    CHECK(kernels::isa_name(kernels::Isa::Scalar) == "scalar");
    CHECK(kernels::isa_name(kernels::Isa::Avx2) == "avx2");
    kernels::select(initial);
}

TEST_CASE("encoder forward and backward agree across kernel tables") {
    if (!kernels::cpu_supports(kernels::Isa::Avx2)) return;
    const auto config = testing::tiny_config(2, 32);
    const auto params = testing::noisy_params(config, 3);
    const auto examples = testing::tiny_examples(8, 5);
    const TokenBatch batch = batch_of(examples);

    auto run = [&](kernels::Isa isa, Gradients& g) {
        kernels::select(isa);
        const auto loss = loss_cls(params, examples, {0.03}, &g);
        return std::make_pair(loss.total, encode(params, batch).values);
    };
    Gradients gs, gv;
    const auto [ls, hs] = run(kernels::Isa::Scalar, gs);
    const auto [lv, hv] = run(kernels::Isa::Avx2, gv);
    CHECK(std::abs(ls - lv) <= 1e-12);
    check_close(hv.data, hs.data, 1e-12);
    for (const auto& [name, g] : gs.all()) check_close(gv.find(name)->data, g.data, 1e-10);
}
