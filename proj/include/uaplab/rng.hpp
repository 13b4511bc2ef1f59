#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "uaplab/errors.hpp"

namespace uaplab {

// Deterministic random source. The generator core is std::mt19937_64 but all
// distributions are implemented here from raw bits, because the standard
// library's distribution algorithms are implementation-defined and we need
// draws that are reproducible across toolchains (golden files, seeded runs).
//
// Stream derivation: derive(a, b, c) mixes the base seed with up to three tag
// words (splitmix64 finalizer) so independent sub-streams can be handed out
// per (step, item, purpose) without sharing state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : base_seed_(seed), gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive. Rejection sampling keeps it unbiased.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw ContractError("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(gen_()); // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return lo + static_cast<int64_t>(r % span);
  }

  // Standard normal via Box-Muller. One fresh pair per call; the second
  // value is dropped so the draw count per call is fixed.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 handled with the usual
  // boost G(a) = G(a+1) * U^(1/a).
  double gamma(double shape) {
    if (shape <= 0.0) throw ContractError("gamma: shape must be positive");
    if (shape < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    double ga = gamma(a);
    double gb = gamma(b);
    return ga / (ga + gb);
  }

  Rng derive(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    uint64_t s = base_seed_;
    s = mix(s ^ mix(a + 0x9e3779b97f4a7c15ULL));
    s = mix(s ^ mix(b + 0xbf58476d1ce4e5b9ULL));
    s = mix(s ^ mix(c + 0x94d049bb133111ebULL));
    return Rng(s);
  }

  uint64_t base_seed() const { return base_seed_; }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t base_seed_;
  std::mt19937_64 gen_;
};

} // namespace uaplab
