#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace chronosplat {

/// SplitMix64 (Steele, Lea, Flood 2014). Used both as the generator and as
/// the mixing function for deriving independent streams, so every random
/// decision in the library is reproducible bit-for-bit on any platform.
/// Distributions are implemented here rather than through <random>, whose
/// distribution algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Stream keyed by (seed, keys...). Streams with different keys are
  /// statistically independent and do not depend on evaluation order.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = mix(seed + 0x9E3779B97F4A7C15ULL);
    for (std::uint64_t k : keys) h = mix(h ^ (k + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
    return Rng(h);
  }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection sampled (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// k distinct indices from [0, n) via partial Fisher-Yates.
  std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t state_;
};

/// Bit pattern of a double, for keying streams on real-valued arguments.
inline std::uint64_t key_of(double x) {
  return std::bit_cast<std::uint64_t>(x);
}

}  // namespace chronosplat
