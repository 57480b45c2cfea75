#include "bpire/classify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "bpire/branching.hpp"
#include "bpire/stats.hpp"

namespace bpire::classify {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// E[f(p)] over a discrete p-law; nullopt for continuous laws.
std::optional<double> p_expect(const env::PLaw& law, const std::function<double(double)>& f) {
  auto atoms = env::p_atoms(law);
  if (atoms.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& [p, w] : atoms) sum += w * f(p);
  return sum;
}

}  // namespace

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::Critical: return "critical";
    case Regime::Subcritical: return "subcritical";
    case Regime::Supercritical: return "supercritical";
    case Regime::Invalid: return "invalid";
  }
  return "invalid";
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::RecurrentByThm3: return "recurrent-by-Thm3";
    case Verdict::TransientByThm4: return "transient-by-Thm4";
    case Verdict::PositiveRecurrentByLemma1: return "positive-recurrent-by-Lemma1";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

nlohmann::ordered_json CriterionVerdict::to_json() const {
  nlohmann::ordered_json j;
  j["regime"] = regime_name(regime);
  j["verdict"] = verdict_name(verdict);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : checked_conditions) {
    nlohmann::ordered_json e;
    e["criterion"] = c.criterion;
    e["condition"] = c.condition;
    e["pass"] = c.pass;
    if (c.quantity) {
      e["quantity"] = *c.quantity;
    } else {
      e["quantity"] = nullptr;
    }
    e["quantity_is_bound"] = c.quantity_is_bound;
    e["detail"] = c.detail;
    arr.push_back(std::move(e));
  }
  j["checked_conditions"] = std::move(arr);
  return j;
}

CriterionVerdict evaluate_criteria(const env::EnvironmentSpec& spec, CriteriaParams params) {
  CriterionVerdict out;
  auto push = [&out](std::string criterion, std::string condition, bool pass,
                     std::optional<double> quantity, bool is_bound, std::string detail) {
    out.checked_conditions.push_back({std::move(criterion), std::move(condition), pass, quantity,
                                      is_bound, std::move(detail)});
  };

  // structural checks first
  for (const auto& [p, w] : env::p_atoms(spec.p_law)) {
    (void)w;
    if (!(p > 0.0 && p < 1.0)) {
      out.regime = Regime::Invalid;
      push("model", "p-law support inside (0,1)", false, std::nullopt, false,
           "assumption A.1 violated: an atom lies outside (0,1)");
      return out;
    }
  }
  bool geometric = spec.offspring == env::OffspringFamily::Geometric;
  if (!geometric && std::holds_alternative<env::LogitUniformP>(spec.p_law)) {
    out.regime = Regime::Invalid;
    push("model", "closed-form offspring moments", false, std::nullopt, false,
         "bernoulli offspring with a continuous p-law is outside the analytic evaluator");
    return out;
  }

  // criticality from E[log mu]
  double mlog = branching::log_mu_mean(spec);
  bool critical = mlog == 0.0 || std::fabs(mlog) < 1e-12;
  out.regime = critical ? Regime::Critical
                        : (mlog < 0.0 ? Regime::Subcritical : Regime::Supercritical);

  // shared quantities
  auto abs_log_mu_m = [&](double d) {
    if (geometric) return env::p_log_rho_abs_moment(spec.p_law, d);  // |log mu| = |log rho|
    return *p_expect(spec.p_law, [d](double p) { return std::pow(std::fabs(std::log(p)), d); });
  };
  double prob_mu_one = geometric ? env::p_prob_half(spec.p_law) : 0.0;
  double tail_exp = env::m_tail_exponent(spec.m_law);

  bool irreducible_floor = env::m_prob_zero(spec.m_law) > 0.0 ||
                           env::m_min_support(spec.m_law) < kInf;
  push("model", "irreducible chain with a reachable floor state", irreducible_floor,
       env::m_prob_zero(spec.m_law), false,
       "offspring laws charge 0 a.s.; the floor state is min supp M");

  // ---- Thm3 (recurrence) -------------------------------------------------
  bool t3_sq = std::isfinite(abs_log_mu_m(2.0));
  push("Thm3", "E[|log mu|^2] < inf", t3_sq, abs_log_mu_m(2.0), false, "");
  push("Thm3", "E[log mu] = 0", critical, mlog, false, "");
  push("Thm3", "Q[mu = 1] < 1", prob_mu_one < 1.0, prob_mu_one, false, "");
  bool t3_m = tail_exp > 2.0;  // exists eps > 0 with E[(log+ M)^(2+eps)] < inf
  double eps_witness = std::isinf(tail_exp) ? params.epsilon
                                            : std::min(params.epsilon, (tail_exp - 2.0) / 2.0);
  push("Thm3", "E[(log+ M)^(2+eps)] < inf for some eps > 0", t3_m,
       std::isinf(tail_exp) ? std::optional<double>{} : std::optional<double>{tail_exp}, false,
       t3_m ? "witness eps = " + std::to_string(eps_witness)
            : "immigration log-tail exponent at or below 2");
  bool thm3 = t3_sq && critical && prob_mu_one < 1.0 && t3_m && irreducible_floor;

  // ---- Thm4 (transience) -------------------------------------------------
  bool t4_delta = true;
  std::string grid_detail = "grid values:";
  for (double d : params.delta_grid) {
    double v = abs_log_mu_m(d);
    t4_delta = t4_delta && std::isfinite(v);
    grid_detail += " " + std::to_string(d) + "->" + std::to_string(v);
  }
  push("Thm4", "E[|log mu|^delta] < inf for every delta < 6", t4_delta, std::nullopt, false,
       grid_detail);
  push("Thm4", "E[log mu] = 0", critical, mlog, false, "");

  // Var(xi) mu^-2 is 1/p for geometric offspring and rho for bernoulli
  std::optional<double> varratio;
  bool varratio_bound = false;
  if (geometric) {
    if (auto v = p_expect(spec.p_law, [](double p) {
          double l = std::log(1.0 / p);
          return l * l;
        })) {
      varratio = *v;
    } else {
      double b = std::get<env::LogitUniformP>(spec.p_law).half_width;
      varratio = (std::log(2.0) + b) * (std::log(2.0) + b);  // log(1/p) <= log 2 + |u|
      varratio_bound = true;
    }
  } else {
    varratio = p_expect(spec.p_law, [](double p) {
      double l = std::max(0.0, std::log(env::rho(p)));
      return l * l;
    });
  }
  push("Thm4", "E[(log+(Var(xi) mu^-2))^2] < inf", varratio.has_value() && std::isfinite(*varratio),
       varratio, varratio_bound, "");
  bool t4_tail = tail_exp < 2.0;
  push("Thm4", "liminf t^lambda Q[log M > t] > 0 for some 0 < lambda < 2", t4_tail,
       std::isinf(tail_exp) ? std::optional<double>{} : std::optional<double>{tail_exp}, false,
       t4_tail ? "witness lambda = " + std::to_string(tail_exp)
               : "log M tail decays too fast (or exactly at the boundary 2)");
  bool thm4 = t4_delta && critical && varratio.has_value() && std::isfinite(*varratio) &&
              t4_tail && irreducible_floor;

  // ---- Lemma 1 (positive recurrence, subcritical) --------------------------
  double log_plus_mu = 0.0;
  if (geometric) {
    if (auto v = p_expect(spec.p_law,
                          [](double p) { return std::max(0.0, -std::log(env::rho(p))); })) {
      log_plus_mu = *v;
    } else {
      log_plus_mu = std::get<env::LogitUniformP>(spec.p_law).half_width / 4.0;  // E[u+]
    }
  }  // bernoulli: log mu = log p < 0, log+ mu = 0
  push("Lemma1", "E[log+ mu] < inf", true, log_plus_mu, false, "");
  push("Lemma1", "E[log mu] < 0", out.regime == Regime::Subcritical, mlog, false, "");
  bool l1_m = env::m_log_moment_finite(spec.m_law, 1.0);
  push("Lemma1", "E[log+ E_e[M]] < inf", l1_m, std::nullopt, false,
       l1_m ? "" : "immigration log-tail exponent at or below 1");
  bool lemma1 = out.regime == Regime::Subcritical && l1_m;

  if (out.regime == Regime::Critical) {
    if (thm3) {
      out.verdict = Verdict::RecurrentByThm3;
    } else if (thm4) {
      out.verdict = Verdict::TransientByThm4;
    } else {
      out.verdict = Verdict::Inconclusive;
    }
  } else if (out.regime == Regime::Subcritical && lemma1) {
    out.verdict = Verdict::PositiveRecurrentByLemma1;
  } else {
    out.verdict = Verdict::Inconclusive;
  }
  return out;
}

SimpleVerdict classical_erw_oracle(double mean_m) {
  return mean_m <= 1.0 ? SimpleVerdict::Recurrent : SimpleVerdict::Transient;
}

nlohmann::ordered_json EmpiricalReport::to_json() const {
  nlohmann::ordered_json j;
  j["replicas"] = replicas;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : return_rows) {
    rows.push_back({{"horizon", r.horizon},
                    {"count", r.count},
                    {"fraction", r.fraction},
                    {"ci_lo", r.ci_lo},
                    {"ci_hi", r.ci_hi}});
  }
  j["return_rows"] = std::move(rows);
  auto grows = nlohmann::ordered_json::array();
  for (const auto& r : exceedance_rows) {
    grows.push_back({{"n", r.horizon},
                     {"count", r.count},
                     {"fraction", r.fraction},
                     {"ci_lo", r.ci_lo},
                     {"ci_hi", r.ci_hi}});
  }
  j["exceedance_rows"] = std::move(grows);
  j["trend_new_returns"] = trend_new_returns;
  j["trend"] = trend;
  j["leaning"] = leaning;
  return j;
}

EmpiricalReport empirical_classify(std::span<const PathStats> paths,
                                   std::span<const std::size_t> horizons,
                                   EmpiricalParams params) {
  if (paths.size() < 30) {
    throw std::invalid_argument("empirical_classify: need at least 30 paths per horizon");
  }
  if (horizons.empty()) throw std::invalid_argument("empirical_classify: no horizons given");

  EmpiricalReport rep;
  rep.replicas = paths.size();
  double z = stats::normal_quantile(1.0 - params.significance / 2.0);

  std::vector<std::size_t> hs(horizons.begin(), horizons.end());
  std::sort(hs.begin(), hs.end());
  for (std::size_t h : hs) {
    std::size_t k = 0;
    for (const auto& p : paths)
      if (p.zero_at && *p.zero_at <= h) ++k;
    auto ci = stats::wilson(k, paths.size(), z);
    rep.return_rows.push_back(
        {h, k, static_cast<double>(k) / static_cast<double>(paths.size()), ci.lo, ci.hi});
  }

  // growth exceedance of e^sqrt(n) at whatever checkpoints the paths carry
  std::vector<std::size_t> cps;
  for (const auto& p : paths)
    for (const auto& [n, lv] : p.checkpoint_logs) {
      (void)lv;
      if (std::find(cps.begin(), cps.end(), n) == cps.end()) cps.push_back(n);
    }
  std::sort(cps.begin(), cps.end());
  for (std::size_t n : cps) {
    std::size_t k = 0;
    std::size_t tot = 0;
    for (const auto& p : paths) {
      for (const auto& [cn, lv] : p.checkpoint_logs) {
        if (cn == n) {
          ++tot;
          if (lv > std::sqrt(static_cast<double>(n))) ++k;
        }
      }
    }
    auto ci = stats::wilson(k, tot, z);
    rep.exceedance_rows.push_back(
        {n, k, tot > 0 ? static_cast<double>(k) / static_cast<double>(tot) : 0.0, ci.lo, ci.hi});
  }

  // returns are nested across horizons, so any return strictly inside the
  // horizon window witnesses an increasing trend
  std::size_t hmin = hs.front(), hmax = hs.back();
  for (const auto& p : paths)
    if (p.zero_at && *p.zero_at > hmin && *p.zero_at <= hmax) ++rep.trend_new_returns;
  rep.trend = rep.trend_new_returns > 0 ? "increasing" : "flat";

  const FractionRow& last = rep.return_rows.back();
  if (last.ci_lo > params.band_hi) {
    rep.leaning = "recurrent-leaning";
  } else if (last.ci_hi < params.band_lo) {
    rep.leaning = "transient-leaning";
  } else {
    rep.leaning = "abstain";
  }
  return rep;
}

SeriesProbeResult series_moment_probe(int d, double a, double c, const VLaw& v_law,
                                      std::size_t partial_terms, std::size_t replicas,
                                      std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("series_moment_probe: d must be >= 1");
  if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("series_moment_probe: a outside (0,1)");
  if (!(c > 0.0)) throw std::invalid_argument("series_moment_probe: c must be positive");

  const double log_a = std::log(a);
  SeriesProbeResult out;
  out.replicas.reserve(replicas);

  for (std::size_t r = 0; r < replicas; ++r) {
    rng::Stream s(seed, r, rng::Lane::Probe);
    SeriesReplicaRow row;
    double sum = 0.0;
    double s_n = 0.0, s_2n = 0.0;
    bool overflow = false;
    std::size_t n_outer = 4 * partial_terms;
    for (std::size_t n = 0; n < n_outer && !overflow; ++n) {
      double base = static_cast<double>(n) * log_a;
      auto inner = static_cast<std::uint64_t>(
                       std::floor(c * std::pow(static_cast<double>(n), d - 1))) + 1;
      for (std::uint64_t i = 0; i < inner; ++i) {
        double log_v;
        if (const auto* cv = std::get_if<ConstantV>(&v_law)) {
          log_v = std::log(cv->value);
        } else {
          double idx = std::get<LogParetoV>(v_law).index;
          log_v = std::pow(s.uniform(), -1.0 / idx);  // Pareto(index) >= 1
        }
        double lt = base + log_v;
        if (lt > 300.0) {
          overflow = true;
          break;
        }
        sum += std::exp(lt);
      }
      if (sum > 1e100) overflow = true;
      if (n + 1 == partial_terms) s_n = sum;
      if (n + 1 == 2 * partial_terms) s_2n = sum;
    }
    if (overflow) {
      row.partial_sum = kInf;
      row.tail1 = kInf;
      row.tail2 = kInf;
      row.diverged = true;
    } else {
      row.partial_sum = s_n;
      row.tail1 = s_2n - s_n;
      row.tail2 = sum - s_2n;
      row.diverged = row.tail2 > 1e-3;
    }
    out.replicas.push_back(row);
  }

  std::vector<double> tails;
  std::size_t diverged = 0;
  for (const auto& row : out.replicas) {
    tails.push_back(row.tail2);
    if (row.diverged) ++diverged;
  }
  std::sort(tails.begin(), tails.end());
  out.median_tail2 = tails.empty() ? 0.0 : tails[tails.size() / 2];
  out.diverged_fraction =
      replicas > 0 ? static_cast<double>(diverged) / static_cast<double>(replicas) : 0.0;
  return out;
}

}  // namespace bpire::classify
