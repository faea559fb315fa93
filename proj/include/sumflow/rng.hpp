#pragma once

#include <cstdint>
#include <random>

namespace sumflow {

/// splitmix64 step, used to derive independent stream seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic random source. std::mt19937_64 has a portable bit stream,
/// but the standard *distributions* do not, so the mapping from bits to
/// doubles/integers is done here by hand and never changes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform in (0, scale]: strictly positive, used for near-zero inits.
  double positive_uniform(double scale) { return scale * (1.0 - uniform()); }

  /// Uniform integer in [0, n), n >= 1. Rejection-free modulo is fine here:
  /// n is always tiny compared to 2^64 so the bias is unobservable, but we
  /// still use Lemire-style rejection to keep the stream well defined.
  std::uint64_t below(std::uint64_t n) {
    // Draw until the value falls in the largest multiple of n.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    for (;;) {
      std::uint64_t v = engine_();
      if (v < limit || limit == 0) return v % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Derive an independent generator for a labelled sub-stream.
  Rng fork(std::uint64_t label) {
    return Rng(splitmix64(engine_() ^ splitmix64(label)));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sumflow
