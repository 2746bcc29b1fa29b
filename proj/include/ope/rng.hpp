#pragma once

// Counter-based SplitMix64 streams.
//
// Draw k of stream (seed, index) is mix64(key + (k+1)*golden) with
// key = mix64(seed ^ mix64(index + golden)). Any draw is a pure function of
// (seed, index, k), so replication r simply uses substream index r and the
// result never depends on which thread ran it. Normal and uniform variates
// are produced here rather than through <random> distributions, whose output
// is implementation-defined.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace ope {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Folds a list of integers into one seed; order matters.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = mix64(seed + kGolden);
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p + kGolden));
  return h;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(seed ^ mix64(stream + kGolden))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  std::uint64_t counter() const { return counter_; }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Box-Muller, two uniforms per draw, no cached second value.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, bound) by rejection (unbiased).
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % bound;
  }

  bool coin(double p_true) { return uniform() < p_true; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ope
