#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "dictlab/errors.hpp"

namespace dictlab {

namespace detail {

// SplitMix64 finalizer; used both to expand seeds and to derive substreams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// Deterministic 64-bit-seeded generator (xoshiro256++ core, SplitMix64
/// seeding).  All distribution code is hand-rolled so that streams are
/// bit-reproducible across platforms and standard-library versions.
///
/// Substream derivation: the stream for item `index` under master seed `s`
/// is seeded with mix64(s) ^ mix64(0x5851f42d4c957f2d + index), so any item
/// of a dataset can be regenerated in isolation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& w : state_) w = detail::mix64(z++);
  }

  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(detail::mix64(seed) ^ detail::mix64(0x5851f42d4c957f2dULL + index));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; the second deviate of each pair is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n), unbiased (rejection sampling).
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw invalid_argument("uniform_below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace dictlab
