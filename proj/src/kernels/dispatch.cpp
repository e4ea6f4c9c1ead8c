#include <atomic>
#include <cstdlib>
#include <string>

#include "lmcal/error.hpp"
#include "lmcal/kernels.hpp"

namespace lmcal::kernels {

#if !defined(LMCAL_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_supports(Isa isa) {
    switch (isa) {
    case Isa::Scalar:
        return true;
    case Isa::Avx2:
#if defined(LMCAL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
        return avx2_table() != nullptr && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    }
    return false;
}

namespace {

Isa detect() {
    if (const char* env = std::getenv("LMCAL_ISA")) {
        const std::string v(env);
        if (v == "scalar") return Isa::Scalar;
        if (v == "avx2" && cpu_supports(Isa::Avx2)) return Isa::Avx2;
    }
    return cpu_supports(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<int>& current() {
    static std::atomic<int> isa{static_cast<int>(detect())};
    return isa;
}

} // namespace

Isa active_isa() { return static_cast<Isa>(current().load(std::memory_order_relaxed)); }

const KernelTable& active() {
    return active_isa() == Isa::Avx2 ? *avx2_table() : scalar_table();
}

void select(Isa isa) {
    require(cpu_supports(isa), "kernel ISA not supported on this machine: " + std::string(isa_name(isa)));
    current().store(static_cast<int>(isa), std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

} // namespace lmcal::kernels
