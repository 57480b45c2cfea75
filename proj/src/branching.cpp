#include "bpire/branching.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace bpire::branching {

namespace {

// largest k for which bernoulli/table sums are drawn by exact convolution
constexpr std::uint64_t kExactSumCutoff = 1ull << 20;
// conversion point from log representation back to (approx) integers
constexpr double kLogToExactBound = 52.0 * 0.6931471805599453;  // log(2^52)

Population normalize(double log_value, bool approx, std::uint64_t threshold) {
  if (log_value == kNegInf) return {0, kNegInf, false, approx};
  if (log_value < kLogToExactBound) {
    auto c = static_cast<std::uint64_t>(std::llround(std::exp(log_value)));
    if (c <= threshold) return {c, kNegInf, false, approx};
  }
  return {0, log_value, true, true};
}

Population clt_sum(const OffspringLaw& law, double log_k, bool approx_in, rng::Stream& s,
                   std::uint64_t threshold) {
  double mu = law.mean();
  if (mu <= 0.0) return {0, kNegInf, false, true};
  // sum ~ mu*k * (1 + N * sqrt(Var/k)/mu)
  double rel_sd = std::exp(0.5 * (std::log(law.variance()) - log_k)) / mu;
  double x = s.normal() * rel_sd;
  if (x < -0.999999) x = -0.999999;
  double lv = std::log(mu) + log_k + std::log1p(x);
  (void)approx_in;
  return normalize(lv, true, threshold);
}

std::uint64_t table_sum_exact(const OffspringLaw& law, std::uint64_t k, rng::Stream& s) {
  // multinomial split over the atoms, one binomial per atom
  std::uint64_t remaining = k;
  double wrem = 1.0;
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i + 1 < law.atoms.size() && remaining > 0; ++i) {
    double q = law.atoms[i].second / wrem;
    std::uint64_t n_i = s.binomial(remaining, std::min(1.0, q));
    sum += n_i * law.atoms[i].first;
    remaining -= n_i;
    wrem -= law.atoms[i].second;
  }
  if (!law.atoms.empty()) sum += remaining * law.atoms.back().first;
  return sum;
}

}  // namespace

Population make_population(const env::MDraw& m) {
  if (m.exact) return Population::exact(*m.exact);
  return Population::from_log(m.log_m);  // log(1+M) == log M at this magnitude
}

Population add(Population a, Population b, std::uint64_t threshold) {
  bool approx = a.approx || b.approx;
  if (!a.is_log && !b.is_log) {
    std::uint64_t sum = a.count + b.count;  // each <= 2^62, no wrap possible
    if (sum <= threshold) return {sum, kNegInf, false, approx};
    return {0, std::log(static_cast<double>(sum)), true, true};
  }
  return normalize(logaddexp(a.log(), b.log()), approx, threshold);
}

double OffspringLaw::mean() const {
  switch (family) {
    case Family::Geometric: return p / (1.0 - p);
    case Family::Bernoulli: return p;
    case Family::Table: {
      double m = 0.0;
      for (const auto& [v, w] : atoms) m += w * static_cast<double>(v);
      return m;
    }
  }
  return 0.0;
}

double OffspringLaw::variance() const {
  switch (family) {
    case Family::Geometric: return p / ((1.0 - p) * (1.0 - p));
    case Family::Bernoulli: return p * (1.0 - p);
    case Family::Table: {
      double m = mean();
      double s2 = 0.0;
      for (const auto& [v, w] : atoms) {
        double d = static_cast<double>(v) - m;
        s2 += w * d * d;
      }
      return s2;
    }
  }
  return 0.0;
}

double OffspringLaw::pgf(double s) const {
  if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("pgf: s must lie in [0,1]");
  switch (family) {
    case Family::Geometric: return (1.0 - p) / (1.0 - p * s);
    case Family::Bernoulli: return 1.0 - p + p * s;
    case Family::Table: {
      double sum = 0.0;
      for (const auto& [v, w] : atoms) sum += w * std::pow(s, static_cast<double>(v));
      return sum;
    }
  }
  return 0.0;
}

std::uint64_t OffspringLaw::sample_one(rng::Stream& s) const {
  switch (family) {
    case Family::Geometric: return s.geometric_n0(p);
    case Family::Bernoulli: return s.bernoulli(p) ? 1 : 0;
    case Family::Table: {
      double u = s.uniform();
      double acc = 0.0;
      for (const auto& [v, w] : atoms) {
        acc += w;
        if (u < acc) return v;
      }
      return atoms.back().first;
    }
  }
  return 0;
}

OffspringLaw geometric_from_p(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("geometric law: p outside (0,1)");
  return {OffspringLaw::Family::Geometric, p, {}};
}

OffspringLaw bernoulli_law(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("bernoulli law: q outside [0,1]");
  return {OffspringLaw::Family::Bernoulli, q, {}};
}

OffspringLaw table_law(std::vector<std::pair<std::uint64_t, double>> atoms) {
  if (atoms.empty()) throw std::invalid_argument("table law: empty support");
  double tot = 0.0;
  for (const auto& [v, w] : atoms) {
    (void)v;
    if (w < 0.0) throw std::invalid_argument("table law: negative weight");
    tot += w;
  }
  if (std::fabs(tot - 1.0) > 1e-9) throw std::invalid_argument("table law: weights must sum to 1");
  return {OffspringLaw::Family::Table, 0.0, std::move(atoms)};
}

GenEnv gen_env_from_site(const env::SiteEnv& site, env::OffspringFamily family) {
  OffspringLaw law = family == env::OffspringFamily::Geometric ? geometric_from_p(site.p)
                                                               : bernoulli_law(site.p);
  return {law, make_population(env::MDraw{site.log_m, site.m_exact})};
}

GenEnv sample_gen_env(const env::EnvironmentSpec& spec, rng::Stream& s) {
  return gen_env_from_site(env::sample_site(spec, s), spec.offspring);
}

Population offspring_sum(const OffspringLaw& law, Population k, rng::Stream& s,
                         std::uint64_t threshold) {
  if (k.is_zero()) return {0, kNegInf, false, k.approx};
  if (k.is_log) return clt_sum(law, k.log_value, true, s, threshold);

  double mu = law.mean();
  switch (law.family) {
    case OffspringLaw::Family::Geometric: {
      // keep the Poisson mean inside the exactly-representable range
      if (std::log(static_cast<double>(k.count)) + std::log(mu) > 62.0 * 0.6931471805599453) {
        return clt_sum(law, k.log(), k.approx, s, threshold);
      }
      std::uint64_t v = s.negative_binomial(static_cast<double>(k.count), law.p);
      if (v <= threshold) return {v, kNegInf, false, k.approx};
      return {0, std::log(static_cast<double>(v)), true, true};
    }
    case OffspringLaw::Family::Bernoulli: {
      if (k.count > kExactSumCutoff) return clt_sum(law, k.log(), k.approx, s, threshold);
      std::uint64_t v = s.binomial(k.count, law.p);
      return {v, kNegInf, false, k.approx};  // v <= k <= threshold
    }
    case OffspringLaw::Family::Table: {
      double max_v = 0.0;
      for (const auto& [v, w] : law.atoms) {
        (void)w;
        max_v = std::max(max_v, static_cast<double>(v));
      }
      if (k.count > kExactSumCutoff ||
          static_cast<double>(k.count) * max_v > static_cast<double>(threshold)) {
        return clt_sum(law, k.log(), k.approx, s, threshold);
      }
      std::uint64_t v = table_sum_exact(law, k.count, s);
      if (v <= threshold) return {v, kNegInf, false, k.approx};
      return {0, std::log(static_cast<double>(v)), true, true};
    }
  }
  return {};
}

std::uint64_t offspring_sum_naive(const OffspringLaw& law, std::uint64_t k, rng::Stream& s) {
  std::uint64_t sum = 0;
  for (std::uint64_t i = 0; i < k; ++i) sum += law.sample_one(s);
  return sum;
}

Population step(Population z, const GenEnv& gen, rng::Stream& s, std::uint64_t threshold) {
  return add(offspring_sum(gen.law, z, s, threshold), gen.m, threshold);
}

BranchingPath simulate(const env::EnvironmentSpec& spec, std::size_t horizon,
                       const rng::StreamSet& streams, SimOptions opts) {
  if (horizon + 1 > opts.max_stored) {
    throw ResourceLimitError("simulate: horizon exceeds the in-memory path budget");
  }
  BranchingPath path;
  path.mode = opts.mode;
  path.populations.reserve(horizon + 1);
  path.envs.reserve(horizon);
  Population z = Population::exact(opts.mode == StartMode::OneAncestor ? 1 : 0);
  path.populations.push_back(z);
  for (std::size_t n = 1; n <= horizon; ++n) {
    rng::Stream env_s = streams.lane(rng::Lane::Env, n);
    rng::Stream off_s = streams.lane(rng::Lane::Offspring, n);
    GenEnv gen = sample_gen_env(spec, env_s);
    z = step(z, gen, off_s, spec.exact_threshold);
    path.populations.push_back(z);
    path.envs.push_back(gen);
    if (!path.hit_zero_at && z.is_zero()) path.hit_zero_at = n;
  }
  return path;
}

PathSummary simulate_summary(const env::EnvironmentSpec& spec, std::size_t horizon,
                             const rng::StreamSet& streams,
                             std::span<const std::size_t> checkpoints, StartMode mode) {
  PathSummary out;
  Population z = Population::exact(mode == StartMode::OneAncestor ? 1 : 0);
  std::size_t ci = 0;
  std::vector<std::size_t> cps(checkpoints.begin(), checkpoints.end());
  std::sort(cps.begin(), cps.end());
  for (std::size_t n = 1; n <= horizon; ++n) {
    rng::Stream env_s = streams.lane(rng::Lane::Env, n);
    rng::Stream off_s = streams.lane(rng::Lane::Offspring, n);
    GenEnv gen = sample_gen_env(spec, env_s);
    z = step(z, gen, off_s, spec.exact_threshold);
    if (!out.hit_zero_at && z.is_zero()) out.hit_zero_at = n;
    out.approx_used = out.approx_used || z.approx;
    while (ci < cps.size() && cps[ci] == n) {
      out.checkpoint_logs.emplace_back(n, z.log());
      ++ci;
    }
  }
  return out;
}

std::vector<Population> immigrant_line(Population m0, std::span<const OffspringLaw> laws,
                                       rng::Stream& s, std::uint64_t threshold) {
  std::vector<Population> line;
  line.reserve(laws.size() + 1);
  line.push_back(m0);
  Population z = m0;
  for (const OffspringLaw& law : laws) {
    z = offspring_sum(law, z, s, threshold);
    line.push_back(z);
  }
  return line;
}

BackwardDraw backward_process(std::size_t k, const env::EnvironmentSpec& spec,
                              const rng::StreamSet& streams) {
  if (k == 0) throw std::invalid_argument("backward_process: lookback must be >= 1");
  BackwardDraw out;
  out.spec_subcritical = classify_criticality(spec) == Criticality::Subcritical;
  // offset i counts time -k+i; immigrants enter at times -k..-1, reproduction
  // runs at times -k+1..0 and no immigrants join at time 0 itself
  rng::Stream env_s = streams.lane(rng::Lane::Env, k);
  GenEnv gen = sample_gen_env(spec, env_s);
  Population z = gen.m;
  for (std::size_t i = 1; i <= k; ++i) {
    rng::Stream env_i = streams.lane(rng::Lane::Env, k - i);
    rng::Stream off_i = streams.lane(rng::Lane::Offspring, k - i);
    GenEnv gen_i = sample_gen_env(spec, env_i);
    z = offspring_sum(gen_i.law, z, off_i, spec.exact_threshold);
    if (i < k) z = add(z, gen_i.m, spec.exact_threshold);
  }
  out.value = z;
  return out;
}

double log_mu_mean(const env::EnvironmentSpec& spec) {
  if (spec.offspring == env::OffspringFamily::Geometric) {
    return -env::p_log_rho_mean(spec.p_law);  // log mu = -log rho
  }
  auto atoms = env::p_atoms(spec.p_law);
  if (atoms.empty()) {
    throw std::invalid_argument(
        "log_mu_mean: bernoulli offspring with a continuous p-law has no closed-form moments");
  }
  double sum = 0.0;
  for (const auto& [p, w] : atoms) sum += w * std::log(p);
  return sum;
}

Criticality classify_criticality(const env::EnvironmentSpec& spec) {
  if (spec.offspring == env::OffspringFamily::Bernoulli &&
      std::holds_alternative<env::LogitUniformP>(spec.p_law)) {
    return Criticality::Subcritical;  // log mu = log p < 0 a.s.
  }
  double m = log_mu_mean(spec);
  if (m == 0.0 || std::fabs(m) < 1e-12) return Criticality::Critical;
  return m < 0.0 ? Criticality::Subcritical : Criticality::Supercritical;
}

}  // namespace bpire::branching
