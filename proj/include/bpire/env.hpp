// Random environment for the walk and the branching process: i.i.d. pairs of
// a transition probability p in (0,1) and an immigrant/cookie count M per
// site (or per generation). All shipped law families expose closed-form
// moments so that criteria evaluation stays analytic, and the heavy-tailed
// immigration family P[M >= k] = (1+log k)^-lambda is sampled by exact
// inversion with a log-domain fallback for astronomically large counts.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bpire/rng.hpp"

namespace bpire::env {

inline constexpr std::uint64_t kDefaultExactThreshold = 1ull << 62;

// ---- transition-probability laws --------------------------------------

// P[p = a] = w, P[p = 1-a] = 1-w.
struct TwoPointP {
  double a = 1.0 / 3.0;
  double w = 0.5;
};

// finite support, atoms (p_i, w_i)
struct DiscreteP {
  std::vector<std::pair<double, double>> atoms;
};

// log rho uniform on [-half_width, half_width]; p = 1/(1+e^u).
struct LogitUniformP {
  double half_width = 1.0;
};

using PLaw = std::variant<TwoPointP, DiscreteP, LogitUniformP>;

// ---- immigration laws ---------------------------------------------------

struct ConstantM {
  std::uint64_t value = 0;
};

struct FiniteM {
  std::vector<std::pair<std::uint64_t, double>> atoms;
};

struct PoissonM {
  double mean = 1.0;
};

// P[M >= k] = (1+log k)^-lambda for k >= 2, P[M = 1] = 0.
struct HeavyTailM {
  double lambda = 1.0;
};

using MLaw = std::variant<ConstantM, FiniteM, PoissonM, HeavyTailM>;

enum class OffspringFamily { Geometric, Bernoulli };

// Whether (p,M) pairs are drawn jointly per site or from the product measure.
// All shipped laws have independent marginals, so the two modes coincide; the
// flag is recorded for the config echo.
enum class PairCoupling { IndependentPair, Product };

struct EnvironmentSpec {
  PLaw p_law = TwoPointP{};
  MLaw m_law = ConstantM{};
  OffspringFamily offspring = OffspringFamily::Geometric;
  PairCoupling coupling_mode = PairCoupling::IndependentPair;
  std::uint64_t exact_threshold = kDefaultExactThreshold;
  bool classical_mode = false;  // permit p == 1/2 environments
};

// One realized site: transition probability plus immigrant count, the latter
// carried as log(1+M) with an exact sidecar below the threshold.
struct SiteEnv {
  double p = 0.5;
  double log_m = 0.0;  // log(1 + M)
  std::optional<std::uint64_t> m_exact = 0;

  bool cookie_at_visit(std::uint64_t i) const {
    if (m_exact) return i <= *m_exact;
    return true;  // beyond the exact threshold M dwarfs any horizon
  }
};

double rho(double p);  // (1-p)/p, throws std::domain_error outside (0,1)

double sample_p(const PLaw& law, rng::Stream& s);

struct MDraw {
  double log_m = 0.0;  // log(1 + M)
  std::optional<std::uint64_t> exact = 0;
};

// Exact inverse-CDF map from a uniform draw; exposed for direct testing.
MDraw heavy_tail_from_uniform(double lambda, double u, std::uint64_t exact_threshold);
MDraw sample_heavy_tail_m(double lambda, rng::Stream& s, std::uint64_t exact_threshold);
MDraw sample_m(const MLaw& law, rng::Stream& s, std::uint64_t exact_threshold);

SiteEnv sample_site(const EnvironmentSpec& spec, rng::Stream& s);

// ---- closed-form law analytics -----------------------------------------

// atoms of a discrete p-law; empty for the continuous family
std::vector<std::pair<double, double>> p_atoms(const PLaw& law);

double p_log_rho_mean(const PLaw& law);                    // E[log rho], exact 0 for symmetric laws
double p_log_rho_abs_moment(const PLaw& law, double delta);  // E[|log rho|^delta]
double p_prob_half(const PLaw& law);                       // P[p = 1/2]

double m_prob_zero(const MLaw& law);
double m_mean(const MLaw& law);       // +inf for the heavy-tailed family
double m_min_support(const MLaw& law);
double m_tail_exponent(const MLaw& law);  // lambda, or +inf for light tails
bool m_log_moment_finite(const MLaw& law, double q);  // E[(log+ M)^q] < inf ?
double m_log_survival(const MLaw& law, double t);     // P[log M > t], exact
double m_pmf(const MLaw& law, std::uint64_t k);

// ---- assumption checks ----------------------------------------------------

struct Violation {
  std::string assumption;  // "A.1", "A.3", ...
  std::string detail;
};

struct MomentDiagnostic {
  double order = 0.0;
  double value = 0.0;  // E[|log rho|^order]
};

struct LogMomentDiagnostic {
  double order = 0.0;
  bool finite = true;
};

struct ValidationReport {
  bool ok = true;
  bool classical_mode = false;
  double log_rho_mean = 0.0;
  bool mean_log_rho_zero = true;
  double prob_p_half = 0.0;
  double prob_m_zero = 0.0;
  double m_tail_exponent = 0.0;
  std::vector<MomentDiagnostic> rho_moments;
  std::vector<LogMomentDiagnostic> m_log_moments;
  std::vector<Violation> violations;
};

ValidationReport validate_spec(const EnvironmentSpec& spec,
                               std::span<const double> delta_grid = {},
                               std::span<const double> q_grid = {});

std::string p_family_name(const PLaw& law);
std::string m_family_name(const MLaw& law);

}  // namespace bpire::env
