#include "bpire/recursion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bpire::recursion {

namespace {

PosReal settle(double lv) {
  if (lv == kNegInf) return PosReal::from_linear(0.0);
  if (lv < std::log(kLinearBound)) return PosReal::from_linear(std::exp(lv));
  return PosReal::from_log(lv);
}

}  // namespace

PosReal ar_step(PosReal x, double mu, PosReal m) {
  if (!(mu > 0.0)) throw std::domain_error("ar_step: mu must be positive");
  if (!x.is_log && !m.is_log) {
    double v = mu * x.lin + m.lin;
    if (v < kLinearBound) return PosReal::from_linear(v);
  }
  return settle(logaddexp(std::log(mu) + x.log(), m.log()));
}

ArEnv sample_ar_env(const env::EnvironmentSpec& spec, rng::Stream& s) {
  env::SiteEnv site = env::sample_site(spec, s);
  double mu = spec.offspring == env::OffspringFamily::Geometric ? 1.0 / env::rho(site.p) : site.p;
  PosReal m = site.m_exact ? PosReal::from_linear(static_cast<double>(*site.m_exact))
                           : settle(site.log_m);
  return {mu, m};
}

ARPath simulate_ar(const env::EnvironmentSpec& spec, std::size_t n,
                   const rng::StreamSet& streams) {
  ARPath path;
  path.xs.reserve(n + 1);
  path.envs.reserve(n);
  path.xs.push_back(PosReal::from_linear(0.0));
  PosReal x = path.xs.back();
  for (std::size_t i = 1; i <= n; ++i) {
    rng::Stream s = streams.lane(rng::Lane::Ar, i);
    ArEnv e = sample_ar_env(spec, s);
    x = ar_step(x, e.mu, e.m);
    path.xs.push_back(x);
    path.envs.push_back(e);
  }
  return path;
}

PosReal dual_w(std::span<const ArEnv> envs, std::size_t n) {
  if (envs.size() < n) throw std::invalid_argument("dual_w: fewer envs than n");
  double acc = kNegInf;       // log of the running sum
  double log_prefix = 0.0;    // log(mu_1 ... mu_{i-1})
  for (std::size_t i = 0; i < n; ++i) {
    acc = logaddexp(acc, log_prefix + envs[i].m.log());
    log_prefix += std::log(envs[i].mu);
  }
  return settle(acc);
}

std::vector<GrowthRow> growth_event_frequency(const env::EnvironmentSpec& spec,
                                              std::span<const std::size_t> checkpoints,
                                              std::size_t replicas, std::uint64_t seed) {
  std::vector<std::size_t> cps(checkpoints.begin(), checkpoints.end());
  std::sort(cps.begin(), cps.end());
  if (cps.empty()) cps = {100, 1000, 10000};
  std::size_t horizon = cps.back();

  std::vector<std::size_t> exceed(cps.size(), 0);
  for (std::size_t r = 0; r < replicas; ++r) {
    rng::StreamSet ss{seed, r};
    PosReal x = PosReal::from_linear(0.0);
    std::size_t ci = 0;
    for (std::size_t i = 1; i <= horizon; ++i) {
      rng::Stream s = ss.lane(rng::Lane::Ar, i);
      ArEnv e = sample_ar_env(spec, s);
      x = ar_step(x, e.mu, e.m);
      while (ci < cps.size() && cps[ci] == i) {
        if (x.log() > std::sqrt(static_cast<double>(i))) ++exceed[ci];
        ++ci;
      }
    }
  }

  std::vector<GrowthRow> rows;
  rows.reserve(cps.size());
  for (std::size_t i = 0; i < cps.size(); ++i) {
    GrowthRow row;
    row.n = cps[i];
    row.exceed = exceed[i];
    row.replicas = replicas;
    row.freq = replicas > 0 ? static_cast<double>(exceed[i]) / static_cast<double>(replicas) : 0.0;
    auto ci = stats::wilson(exceed[i], replicas, 1.96);
    row.ci_lo = ci.lo;
    row.ci_hi = ci.hi;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bpire::recursion
