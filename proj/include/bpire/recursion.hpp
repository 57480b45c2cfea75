// Critical random difference equation X_n = mu_n X_{n-1} + M_n with X_0 = 0,
// its exchangeable dual W_n = M_1 + mu_1 M_2 + ... + mu_1...mu_{n-1} M_n, and
// the e^sqrt(n) growth-event table. Values are carried in a log-capable
// nonnegative representation since heavy-tailed immigration overflows any
// fixed floating range.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bpire/env.hpp"
#include "bpire/logspace.hpp"
#include "bpire/rng.hpp"
#include "bpire/stats.hpp"

namespace bpire::recursion {

// Nonnegative real, linear while it fits comfortably in a double.
struct PosReal {
  double lin = 0.0;
  double log_v = kNegInf;
  bool is_log = false;

  static PosReal from_linear(double x) { return {x, kNegInf, false}; }
  static PosReal from_log(double lv) { return {0.0, lv, true}; }

  double log() const { return is_log ? log_v : (lin > 0.0 ? std::log(lin) : kNegInf); }
  double linear() const { return is_log ? std::exp(log_v) : lin; }
  bool is_zero() const { return !is_log && lin == 0.0; }
};

inline constexpr double kLinearBound = 1e280;

PosReal ar_step(PosReal x, double mu, PosReal m);

struct ArEnv {
  double mu = 1.0;
  PosReal m;
};

struct ARPath {
  std::vector<PosReal> xs;  // xs[0] = 0
  std::vector<ArEnv> envs;
};

ArEnv sample_ar_env(const env::EnvironmentSpec& spec, rng::Stream& s);
ARPath simulate_ar(const env::EnvironmentSpec& spec, std::size_t n, const rng::StreamSet& streams);

// W_n from the same envs; equal to X_n in law (not pathwise) over i.i.d. envs.
PosReal dual_w(std::span<const ArEnv> envs, std::size_t n);

struct GrowthRow {
  std::size_t n = 0;
  std::size_t exceed = 0;  // count of X_n > e^sqrt(n)
  std::size_t replicas = 0;
  double freq = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

std::vector<GrowthRow> growth_event_frequency(const env::EnvironmentSpec& spec,
                                              std::span<const std::size_t> checkpoints,
                                              std::size_t replicas, std::uint64_t seed);

}  // namespace bpire::recursion
