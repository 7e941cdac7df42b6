#pragma once

#include <cstdint>
#include <random>

namespace maskctrl {

/// Per-chain random source.
///
/// Wraps std::mt19937_64 (bit-exact across standard libraries) and derives
/// doubles and bounded integers by hand, since the std distributions are
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Rejection on the top of the range keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::mt19937_64 engine_;
};

/// Seed for chain `index` of a run seeded with `seed`.
inline std::uint64_t chain_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ index;
}

}  // namespace maskctrl
