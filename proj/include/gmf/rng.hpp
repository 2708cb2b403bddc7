#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

namespace gmf {

/// SplitMix64 generator.  Chosen because the whole algorithm fits in a dozen
/// lines, so results are reproducible across toolchains and even across
/// reimplementations in other languages, which std::mt19937 distributions do
/// not guarantee.
///
/// Draw conventions used throughout the library:
///   - uniform()  = (next() >> 11) * 2^-53, i.e. one raw draw per uniform
///   - normal()   draws a fresh Box-Muller pair (two uniforms) per call and
///     discards the second member; no spare is cached
///   - uniform_int(n) rejects to avoid modulo bias, one draw per attempt
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform draw in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform draw in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    assert(n > 0);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t raw;
    do {
      raw = next();
    } while (raw >= limit);
    return raw % n;
  }

  /// Standard normal via Box-Muller.  Consumes exactly two uniforms.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Fisher-Yates shuffle, back to front, one uniform_int per position.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace gmf
