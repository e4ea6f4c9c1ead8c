#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lmcal {

/// Derives independent sub-seeds from one experiment seed.
///
/// sub_seed = splitmix64(seed ^ fnv1a64(tag)). The same (seed, tag) pair
/// always yields the same value, and distinct tags decorrelate streams used
/// for corpus generation, initialization, masking, shuffling and sampling.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

std::uint64_t splitmix64(std::uint64_t x);

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

} // namespace lmcal
