#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>

namespace peanut {

/// Deterministic splitmix64 stream. Self-contained so that results do not
/// depend on standard-library distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : s_(seed) {}

  uint64_t next_u64() {
    s_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = s_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    assert(lo <= hi);
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Index draw proportional to non-negative weights; -1 if all zero.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) return -1;
    double r = uniform() * total;
    double acc = 0.0;
    for (size_t k = 0; k < weights.size(); ++k) {
      acc += weights[k];
      if (r < acc) return static_cast<int>(k);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Rejection-free polar method would cache state; Box-Muller using two
    // fresh draws keeps the stream position deterministic per call.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586 * u2);
  }

  /// Derive an independent stream id from a parent seed and a tag.
  static uint64_t derive(uint64_t seed, uint64_t tag) {
    uint64_t z = seed ^ (0x9e3779b97f4a7c15ull + tag * 0xbf58476d1ce4e5b9ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t s_;
};

}  // namespace peanut
