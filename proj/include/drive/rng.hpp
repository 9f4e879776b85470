#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace drive {

using Rng = std::mt19937_64;

/// Derives an independent seed for a named sub-stream ("env", "init", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(derive_seed(seed, stream));
}

/// Uniform in [lo, hi). Portable: does not depend on the standard library's
/// distribution implementations.
double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);
/// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

}  // namespace drive
