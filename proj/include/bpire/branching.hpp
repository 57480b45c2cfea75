// Branching process in random environment with immigration:
//   Z_0 = 0 (or 1),  Z_n = xi_1 + ... + xi_{Z_{n-1}} + M_n,
// with i.i.d. per-generation offspring laws and immigrant counts. Populations
// are exact integers up to a configurable threshold and continue in log
// domain beyond it; geometric offspring sums are drawn in O(1) as negative
// binomials through a gamma-Poisson mixture.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bpire/env.hpp"
#include "bpire/logspace.hpp"
#include "bpire/rng.hpp"

namespace bpire::branching {

inline constexpr std::uint64_t kDefaultExactThreshold = env::kDefaultExactThreshold;

// Nonnegative population count. Exact integer while count <= threshold;
// log-domain (natural log of the count) once it grows past it. `approx` marks
// values whose distribution was continued by the CLT shortcut (or descend
// from one); exactness-required tests reject those.
struct Population {
  std::uint64_t count = 0;
  double log_value = kNegInf;
  bool is_log = false;
  bool approx = false;

  static Population exact(std::uint64_t c) { return {c, kNegInf, false, false}; }
  static Population from_log(double lv) { return {0, lv, true, true}; }

  bool is_zero() const { return !is_log && count == 0; }
  double log() const {
    if (is_log) return log_value;
    return count == 0 ? kNegInf : std::log(static_cast<double>(count));
  }
  double linear() const {  // may overflow to inf; for diagnostics only
    return is_log ? std::exp(log_value) : static_cast<double>(count);
  }
};

Population make_population(const env::MDraw& m);
Population add(Population a, Population b, std::uint64_t threshold);

struct OffspringLaw {
  enum class Family { Geometric, Bernoulli, Table };

  Family family = Family::Geometric;
  double p = 0.5;  // geometric continuation probability / bernoulli success
  std::vector<std::pair<std::uint64_t, double>> atoms;  // Table only

  double mean() const;
  double variance() const;
  double pgf(double s) const;  // throws std::domain_error outside [0,1]
  double log_mean() const { return std::log(mean()); }
  std::uint64_t sample_one(rng::Stream& s) const;
};

OffspringLaw geometric_from_p(double p);
OffspringLaw bernoulli_law(double q);
OffspringLaw table_law(std::vector<std::pair<std::uint64_t, double>> atoms);

// One realized generation of environment: reproduction law + immigrants.
struct GenEnv {
  OffspringLaw law;
  Population m;
};

GenEnv gen_env_from_site(const env::SiteEnv& site, env::OffspringFamily family);
GenEnv sample_gen_env(const env::EnvironmentSpec& spec, rng::Stream& s);

// Sum of k i.i.d. offspring draws. Exact for geometric laws at any exact k;
// exact for bernoulli/table while the expected work stays reasonable, CLT
// gaussian continuation (flagged approx) beyond; log-domain k always uses the
// CLT form mu*k * (1 + N*sqrt(Var/k)/mu).
Population offspring_sum(const OffspringLaw& law, Population k, rng::Stream& s,
                         std::uint64_t threshold);
// k-fold summation, for distribution-equality tests against the shortcut
std::uint64_t offspring_sum_naive(const OffspringLaw& law, std::uint64_t k, rng::Stream& s);

Population step(Population z, const GenEnv& gen, rng::Stream& s, std::uint64_t threshold);

enum class StartMode { ZeroStart, OneAncestor };

struct BranchingPath {
  std::vector<Population> populations;  // index = generation, populations[0] = start
  std::vector<GenEnv> envs;             // envs[n-1] acts on generation n
  std::optional<std::size_t> hit_zero_at;  // first n >= 1 with Z_n = 0
  StartMode mode = StartMode::ZeroStart;
};

// Per-generation env and offspring randomness are keyed by generation index,
// so any generation can be regenerated from the stored environment and its
// stream key. Throws ResourceLimitError if horizon exceeds max_stored.
struct SimOptions {
  StartMode mode = StartMode::ZeroStart;
  std::size_t max_stored = 1 << 24;
};

struct ResourceLimitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

BranchingPath simulate(const env::EnvironmentSpec& spec, std::size_t horizon,
                       const rng::StreamSet& streams, SimOptions opts = {});

// Streaming form: O(1) memory, records hit-zero plus log Z at checkpoints.
struct PathSummary {
  std::optional<std::size_t> hit_zero_at;
  std::vector<std::pair<std::size_t, double>> checkpoint_logs;
  bool approx_used = false;
};

PathSummary simulate_summary(const env::EnvironmentSpec& spec, std::size_t horizon,
                             const rng::StreamSet& streams,
                             std::span<const std::size_t> checkpoints,
                             StartMode mode = StartMode::ZeroStart);

// Single immigrant line: starts with m0 individuals, reproduces through the
// given laws, no further immigration.
std::vector<Population> immigrant_line(Population m0, std::span<const OffspringLaw> laws,
                                       rng::Stream& s, std::uint64_t threshold);

// Z~_0^(-k) = sum_{j=1..k} Z_j(-j): the process at time 0 started k steps in
// the past. Converges in law to the stationary distribution for subcritical
// specs; `spec_subcritical` is false when that premise fails.
struct BackwardDraw {
  Population value;
  bool spec_subcritical = true;
};

BackwardDraw backward_process(std::size_t k, const env::EnvironmentSpec& spec,
                              const rng::StreamSet& streams);

enum class Criticality { Subcritical, Critical, Supercritical };

// Sign of E[log mu]; exact for the shipped families.
Criticality classify_criticality(const env::EnvironmentSpec& spec);
double log_mu_mean(const env::EnvironmentSpec& spec);

}  // namespace bpire::branching
