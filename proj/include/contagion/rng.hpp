#pragma once

// Portable random draws on top of std::mt19937_64.
//
// The standard distributions are implementation-defined, so the simulator
// converts raw engine output itself. Identical seeds therefore give identical
// streams on every conforming standard library.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string_view>

namespace contagion::rng {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent sub-stream, e.g. one per simulated item.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 1].
inline double uniform_open0(Engine& eng) { return 1.0 - uniform01(eng); }

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = eng();
  } while (x >= limit);
  return x % n;
}

/// Number of failed per-step Bernoulli(p) trials before the first success.
/// Returns max() when p == 0.
inline std::int64_t geometric_failures(Engine& eng, double p) {
  if (p <= 0.0) return std::numeric_limits<std::int64_t>::max();
  if (p >= 1.0) return 0;
  const double g = std::floor(std::log(uniform_open0(eng)) / std::log1p(-p));
  if (g >= 9.0e18) return std::numeric_limits<std::int64_t>::max();
  return static_cast<std::int64_t>(g);
}

/// Index drawn from a cumulative weight table (last entry = total).
inline std::size_t draw_from_cdf(Engine& eng, std::span<const double> cdf) {
  const double u = uniform01(eng) * cdf.back();
  std::size_t lo = 0, hi = cdf.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (cdf[mid] > u)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

/// 64-bit FNV-1a; stable across platforms, used for train/test splitting.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace contagion::rng
