// Counter-based random streams keyed by (seed, replica, lane, index).
//
// Every sampling site in the library owns a stream derived from that key, so
// replica-level results are independent of thread scheduling and a draw can be
// re-issued at any time (random access by counter). The generator is the
// SplitMix64 finalizer over an affine counter sequence seeded from the hashed
// key; distinct keys give distinct, statistically independent sequences.

#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>

namespace bpire::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Order-sensitive hash of the four key words.
inline std::uint64_t hash_key(std::uint64_t seed, std::uint64_t replica,
                              std::uint64_t lane, std::uint64_t index) {
  std::uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ull);
  h = mix64(h ^ replica);
  h = mix64(h ^ (lane + 0x13198a2e03707344ull));
  h = mix64(h ^ index);
  return h;
}

// Maps signed site coordinates onto the nonnegative index word.
inline std::uint64_t zigzag(std::int64_t s) {
  return (static_cast<std::uint64_t>(s) << 1) ^ static_cast<std::uint64_t>(s >> 63);
}

// One stream lane per consumer so independent parts of a replica never share
// randomness.
enum class Lane : std::uint64_t {
  Env = 1,
  Offspring = 2,
  WalkDecision = 3,
  Ar = 4,
  Ladder = 5,
  Probe = 6,
  Line = 7,
};

class Stream {
 public:
  Stream() = default;
  Stream(std::uint64_t seed, std::uint64_t replica, Lane lane, std::uint64_t index = 0)
      : base_(hash_key(seed, replica, static_cast<std::uint64_t>(lane), index)) {}

  std::uint64_t u64_at(std::uint64_t i) const { return mix64(base_ + i * kGolden); }
  std::uint64_t next_u64() { return u64_at(ctr_++); }
  std::uint64_t position() const { return ctr_; }
  void seek(std::uint64_t pos) { ctr_ = pos; }

  // Uniform on the open interval (0,1).
  double uniform() { return to_unit(next_u64()); }
  double uniform_at(std::uint64_t i) const { return to_unit(u64_at(i)); }

  bool bernoulli(double q) { return uniform() < q; }

  // Standard normal via Box-Muller; consumes exactly two words per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double exponential() { return -std::log(uniform()); }

  // P[X = n] = p^n (1-p) on {0,1,2,...}.
  std::uint64_t geometric_n0(double p) {
    assert(p > 0.0 && p < 1.0);
    double g = std::floor(std::log(uniform()) / std::log(p));
    return g >= 0.0 ? static_cast<std::uint64_t>(g) : 0;
  }

  double gamma(double shape);          // scale 1
  std::uint64_t poisson(double mean);

  // Sum of `shape` i.i.d. geometric_n0(p) draws, sampled O(1) as a
  // gamma-Poisson mixture.
  std::uint64_t negative_binomial(double shape, double p) {
    assert(p > 0.0 && p < 1.0);
    if (shape <= 0.0) return 0;
    return poisson(gamma(shape) * (p / (1.0 - p)));
  }

  // Exact binomial; expected cost O(min(n, n*q)+1). Callers cap n.
  std::uint64_t binomial(std::uint64_t n, double q);

  // UniformRandomBitGenerator interface.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }
  result_type operator()() { return next_u64(); }

 private:
  static double to_unit(std::uint64_t v) {
    return static_cast<double>(v >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  std::uint64_t base_ = 0;
  std::uint64_t ctr_ = 0;
};

// Marsaglia-Tsang; exact for any shape > 0.
inline double Stream::gamma(double shape) {
  assert(shape > 0.0);
  if (shape < 1.0) {
    // boost by one and scale back
    double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Knuth's product method below 30, Hormann's PTRD transformed rejection above.
inline std::uint64_t Stream::poisson(double mean) {
  assert(mean >= 0.0);
  if (mean <= 0.0) return 0;
  if (mean < 30.0) {
    double limit = std::exp(-mean);
    double prod = uniform();
    std::uint64_t n = 0;
    while (prod > limit) {
      prod *= uniform();
      ++n;
    }
    return n;
  }
  double smu = std::sqrt(mean);
  double b = 0.931 + 2.53 * smu;
  double a = -0.059 + 0.02483 * b;
  double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    double u = uniform() - 0.5;
    double v = uniform();
    double us = 0.5 - std::fabs(u);
    double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
    double rhs = kf * std::log(mean) - mean - std::lgamma(kf + 1.0);
    if (lhs <= rhs) return static_cast<std::uint64_t>(kf);
  }
}

inline std::uint64_t Stream::binomial(std::uint64_t n, double q) {
  assert(q >= 0.0 && q <= 1.0);
  if (n == 0 || q <= 0.0) return 0;
  if (q >= 1.0) return n;
  bool flipped = q > 0.5;
  double qq = flipped ? 1.0 - q : q;
  std::uint64_t hits = 0;
  if (static_cast<double>(n) * qq < 16.0 && n > 64) {
    // skip over failures with geometric gaps
    double log1mq = std::log1p(-qq);
    double pos = 0.0;
    for (;;) {
      pos += std::floor(std::log(uniform()) / log1mq) + 1.0;
      if (pos > static_cast<double>(n)) break;
      ++hits;
    }
  } else {
    for (std::uint64_t i = 0; i < n; ++i) hits += uniform() < qq ? 1 : 0;
  }
  return flipped ? n - hits : hits;
}

// Per-replica bundle of keyed lanes.
struct StreamSet {
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  Stream lane(Lane l, std::uint64_t index = 0) const { return Stream(seed, replica, l, index); }
};

}  // namespace bpire::rng
