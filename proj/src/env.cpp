#include "bpire/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bpire/logspace.hpp"

namespace bpire::env {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double heavy_survival_at(double lambda, std::uint64_t k) {
  // P[M >= k] for k >= 2
  return std::pow(1.0 + std::log(static_cast<double>(k)), -lambda);
}
}  // namespace

double rho(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("rho: p must lie in (0,1)");
  return (1.0 - p) / p;
}

double sample_p(const PLaw& law, rng::Stream& s) {
  if (const auto* tp = std::get_if<TwoPointP>(&law)) {
    return s.uniform() < tp->w ? tp->a : 1.0 - tp->a;
  }
  if (const auto* d = std::get_if<DiscreteP>(&law)) {
    double u = s.uniform();
    double acc = 0.0;
    for (const auto& [p, w] : d->atoms) {
      acc += w;
      if (u < acc) return p;
    }
    return d->atoms.back().first;
  }
  const auto& lu = std::get<LogitUniformP>(law);
  double u = (2.0 * s.uniform() - 1.0) * lu.half_width;  // u = logit(p)
  return 1.0 / (1.0 + std::exp(-u));
}

MDraw heavy_tail_from_uniform(double lambda, double u, std::uint64_t exact_threshold) {
  if (!(lambda > 0.0)) throw std::domain_error("heavy tail: lambda must be positive");
  double s2 = heavy_survival_at(lambda, 2);
  if (u >= s2) return {0.0, 0};
  // largest k >= 2 with (1+log k)^-lambda > u, i.e. log k < u^(-1/lambda) - 1
  double t = std::pow(u, -1.0 / lambda) - 1.0;  // = log of the real-valued root
  if (t > std::log(static_cast<double>(exact_threshold))) {
    // log-domain: log(1+M) with M = floor(e^t)-ish; the unit offset is far
    // below double resolution at this magnitude
    return {t, std::nullopt};
  }
  auto k = static_cast<std::uint64_t>(std::floor(std::exp(t)));
  if (k < 2) k = 2;
  // settle boundary ulps against the survival function itself
  while (heavy_survival_at(lambda, k + 1) > u) ++k;
  while (k > 2 && heavy_survival_at(lambda, k) <= u) --k;
  return {std::log1p(static_cast<double>(k)), k};
}

MDraw sample_heavy_tail_m(double lambda, rng::Stream& s, std::uint64_t exact_threshold) {
  return heavy_tail_from_uniform(lambda, s.uniform(), exact_threshold);
}

MDraw sample_m(const MLaw& law, rng::Stream& s, std::uint64_t exact_threshold) {
  if (const auto* c = std::get_if<ConstantM>(&law)) {
    return {std::log1p(static_cast<double>(c->value)), c->value};
  }
  if (const auto* f = std::get_if<FiniteM>(&law)) {
    double u = s.uniform();
    double acc = 0.0;
    std::uint64_t v = f->atoms.back().first;
    for (const auto& [m, w] : f->atoms) {
      acc += w;
      if (u < acc) {
        v = m;
        break;
      }
    }
    return {std::log1p(static_cast<double>(v)), v};
  }
  if (const auto* po = std::get_if<PoissonM>(&law)) {
    std::uint64_t v = s.poisson(po->mean);
    return {std::log1p(static_cast<double>(v)), v};
  }
  return sample_heavy_tail_m(std::get<HeavyTailM>(law).lambda, s, exact_threshold);
}

SiteEnv sample_site(const EnvironmentSpec& spec, rng::Stream& s) {
  SiteEnv site;
  site.p = sample_p(spec.p_law, s);
  MDraw m = sample_m(spec.m_law, s, spec.exact_threshold);
  site.log_m = m.log_m;
  site.m_exact = m.exact;
  return site;
}

std::vector<std::pair<double, double>> p_atoms(const PLaw& law) {
  if (const auto* tp = std::get_if<TwoPointP>(&law)) {
    if (tp->w >= 1.0) return {{tp->a, 1.0}};
    if (tp->w <= 0.0) return {{1.0 - tp->a, 1.0}};
    return {{tp->a, tp->w}, {1.0 - tp->a, 1.0 - tp->w}};
  }
  if (const auto* d = std::get_if<DiscreteP>(&law)) return d->atoms;
  return {};
}

double p_log_rho_mean(const PLaw& law) {
  if (const auto* tp = std::get_if<TwoPointP>(&law)) {
    // rho(1-a) = 1/rho(a), so the symmetric weight cancels exactly
    return (2.0 * tp->w - 1.0) * std::log(rho(tp->a));
  }
  if (std::holds_alternative<LogitUniformP>(law)) return 0.0;
  const auto& atoms = std::get<DiscreteP>(law).atoms;
  // pair up mirrored atoms (p, 1-p) of equal weight so symmetric specs
  // report an exact zero
  double sum = 0.0;
  std::vector<bool> used(atoms.size(), false);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (used[i]) continue;
    bool paired = false;
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      if (used[j]) continue;
      if (std::fabs(atoms[i].first + atoms[j].first - 1.0) < 1e-12 &&
          std::fabs(atoms[i].second - atoms[j].second) < 1e-12) {
        used[i] = used[j] = true;
        paired = true;
        break;
      }
    }
    if (!paired) sum += atoms[i].second * std::log(rho(atoms[i].first));
  }
  return sum;
}

double p_log_rho_abs_moment(const PLaw& law, double delta) {
  if (const auto* lu = std::get_if<LogitUniformP>(&law)) {
    return std::pow(lu->half_width, delta) / (delta + 1.0);
  }
  double sum = 0.0;
  for (const auto& [p, w] : p_atoms(law)) sum += w * std::pow(std::fabs(std::log(rho(p))), delta);
  return sum;
}

double p_prob_half(const PLaw& law) {
  if (std::holds_alternative<LogitUniformP>(law)) return 0.0;
  double sum = 0.0;
  for (const auto& [p, w] : p_atoms(law))
    if (std::fabs(p - 0.5) < 1e-15) sum += w;
  return sum;
}

double m_prob_zero(const MLaw& law) {
  if (const auto* c = std::get_if<ConstantM>(&law)) return c->value == 0 ? 1.0 : 0.0;
  if (const auto* f = std::get_if<FiniteM>(&law)) {
    double sum = 0.0;
    for (const auto& [m, w] : f->atoms)
      if (m == 0) sum += w;
    return sum;
  }
  if (const auto* po = std::get_if<PoissonM>(&law)) return std::exp(-po->mean);
  return 1.0 - heavy_survival_at(std::get<HeavyTailM>(law).lambda, 2);
}

double m_mean(const MLaw& law) {
  if (const auto* c = std::get_if<ConstantM>(&law)) return static_cast<double>(c->value);
  if (const auto* f = std::get_if<FiniteM>(&law)) {
    double sum = 0.0;
    for (const auto& [m, w] : f->atoms) sum += w * static_cast<double>(m);
    return sum;
  }
  if (const auto* po = std::get_if<PoissonM>(&law)) return po->mean;
  // sum_k P[M >= k] decays like (log k)^-lambda: divergent for every lambda
  return kInf;
}

double m_min_support(const MLaw& law) {
  if (const auto* c = std::get_if<ConstantM>(&law)) return static_cast<double>(c->value);
  if (const auto* f = std::get_if<FiniteM>(&law)) {
    double mn = kInf;
    for (const auto& [m, w] : f->atoms)
      if (w > 0.0) mn = std::min(mn, static_cast<double>(m));
    return mn;
  }
  return 0.0;  // Poisson and heavy tail both charge 0
}

double m_tail_exponent(const MLaw& law) {
  if (const auto* h = std::get_if<HeavyTailM>(&law)) return h->lambda;
  return kInf;
}

bool m_log_moment_finite(const MLaw& law, double q) {
  if (const auto* h = std::get_if<HeavyTailM>(&law)) return q < h->lambda;
  (void)q;
  return true;
}

double m_log_survival(const MLaw& law, double t) {
  // P[log M > t] = P[M >= floor(e^t) + 1]
  if (const auto* c = std::get_if<ConstantM>(&law)) {
    return (c->value > 0 && std::log(static_cast<double>(c->value)) > t) ? 1.0 : 0.0;
  }
  if (const auto* f = std::get_if<FiniteM>(&law)) {
    double sum = 0.0;
    for (const auto& [m, w] : f->atoms)
      if (m > 0 && std::log(static_cast<double>(m)) > t) sum += w;
    return sum;
  }
  if (const auto* po = std::get_if<PoissonM>(&law)) {
    if (t < 0.0) return 1.0 - std::exp(-po->mean);
    double bound = std::exp(t);
    if (bound > 1e9) return 0.0;  // numerically zero far in the Poisson tail
    auto kmin = static_cast<std::uint64_t>(std::floor(bound)) + 1;
    double logterm = -po->mean;  // log pmf at 0
    double cdf = std::exp(logterm);
    for (std::uint64_t k = 1; k < kmin; ++k) {
      logterm += std::log(po->mean) - std::log(static_cast<double>(k));
      cdf += std::exp(logterm);
    }
    return std::max(0.0, 1.0 - cdf);
  }
  double lambda = std::get<HeavyTailM>(law).lambda;
  if (t < 0.0) return heavy_survival_at(lambda, 1 + 1);  // P[M >= 2] = P[M >= 1]
  if (t < 42.0) {  // floor(e^t) still fits an exact integer
    auto k = static_cast<std::uint64_t>(std::floor(std::exp(t)));
    if (k < 1) k = 1;
    return heavy_survival_at(lambda, std::max<std::uint64_t>(k + 1, 2));
  }
  return std::pow(1.0 + t, -lambda);
}

double m_pmf(const MLaw& law, std::uint64_t k) {
  if (const auto* c = std::get_if<ConstantM>(&law)) return c->value == k ? 1.0 : 0.0;
  if (const auto* f = std::get_if<FiniteM>(&law)) {
    double sum = 0.0;
    for (const auto& [m, w] : f->atoms)
      if (m == k) sum += w;
    return sum;
  }
  if (const auto* po = std::get_if<PoissonM>(&law)) {
    return std::exp(-po->mean + static_cast<double>(k) * std::log(po->mean) -
                    std::lgamma(static_cast<double>(k) + 1.0));
  }
  double lambda = std::get<HeavyTailM>(law).lambda;
  if (k == 0) return 1.0 - heavy_survival_at(lambda, 2);
  if (k == 1) return 0.0;
  return heavy_survival_at(lambda, k) - heavy_survival_at(lambda, k + 1);
}

ValidationReport validate_spec(const EnvironmentSpec& spec, std::span<const double> delta_grid,
                               std::span<const double> q_grid) {
  static const double kDefaultDeltas[] = {1.0, 2.0, 3.0, 4.0, 5.0, 5.9};
  static const double kDefaultQs[] = {1.0, 2.0, 2.1, 3.0};
  if (delta_grid.empty()) delta_grid = kDefaultDeltas;
  if (q_grid.empty()) q_grid = kDefaultQs;

  ValidationReport rep;
  rep.classical_mode = spec.classical_mode;

  for (const auto& [p, w] : p_atoms(spec.p_law)) {
    (void)w;
    if (!(p > 0.0 && p < 1.0)) {
      rep.violations.push_back({"A.1", "p-law support leaves (0,1)"});
      rep.ok = false;
      return rep;
    }
  }

  rep.prob_p_half = p_prob_half(spec.p_law);
  if (rep.prob_p_half >= 1.0 && !spec.classical_mode) {
    rep.violations.push_back({"A.1", "P[p = 1/2] < 1 fails: the p-law is degenerate at 1/2"});
  }

  rep.log_rho_mean = p_log_rho_mean(spec.p_law);
  rep.mean_log_rho_zero = rep.log_rho_mean == 0.0;
  if (!rep.mean_log_rho_zero && !spec.classical_mode) {
    // A.3 also needs E[|log rho|] < inf, which every shipped family satisfies
    if (std::fabs(rep.log_rho_mean) > 1e-12) {
      rep.violations.push_back({"A.3", "E[log rho] = 0 fails for this p-law"});
    } else {
      rep.mean_log_rho_zero = true;
    }
  }

  rep.prob_m_zero = m_prob_zero(spec.m_law);
  if (!(rep.prob_m_zero > 0.0)) {
    rep.violations.push_back({"A.4", "P[M = 0] > 0 fails: immigration never vanishes"});
  }
  // P[M = inf] = 0 holds for every shipped family (finite survival decay)

  for (double d : delta_grid) rep.rho_moments.push_back({d, p_log_rho_abs_moment(spec.p_law, d)});
  for (double q : q_grid) rep.m_log_moments.push_back({q, m_log_moment_finite(spec.m_law, q)});
  rep.m_tail_exponent = m_tail_exponent(spec.m_law);

  rep.ok = rep.violations.empty();
  return rep;
}

std::string p_family_name(const PLaw& law) {
  if (std::holds_alternative<TwoPointP>(law)) return "two-point";
  if (std::holds_alternative<DiscreteP>(law)) return "discrete";
  return "logit-uniform";
}

std::string m_family_name(const MLaw& law) {
  if (std::holds_alternative<ConstantM>(law)) return "constant";
  if (std::holds_alternative<FiniteM>(law)) return "finite";
  if (std::holds_alternative<PoissonM>(law)) return "poisson";
  return "heavy-tail";
}

}  // namespace bpire::env
