// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_IO_RNG_HPP
#define FLOWPLAN_IO_RNG_HPP

#include <cstdint>

namespace flowplan {

/// Deterministic generator with explicit uniform/normal draws so that sampled
/// sequences do not depend on the standard library's distribution
/// implementations. Streams derived from (seed, stream) pairs are independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ull)) {}
  Rng(std::uint64_t seed, std::uint64_t stream)
      : Rng(splitmix(seed) ^ splitmix(stream * 0xbf58476d1ce4e5b9ull + 0x2545f4914f6cdd1dull)) {}

  std::uint64_t next_u64() {
    // xorshift64* keeps the generator self-contained and portable.
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545f4914f6cdd1dull;
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi_inclusive) {
    const auto span = static_cast<std::uint64_t>(hi_inclusive - lo) + 1ull;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Standard normal via Box-Muller; caches the second draw.
  double normal();

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t state_;
  bool has_cached_{false};
  double cached_{0.0};
};

}  // namespace flowplan

#endif  // FLOWPLAN_IO_RNG_HPP
