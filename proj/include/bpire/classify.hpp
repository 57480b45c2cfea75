// Analytic recurrence/transience criteria for the critical BPIRE, the
// classical excited-walk oracle, statistical classification of simulated
// paths, and the geometric-series log-moment probe. Criteria evaluation is
// exact (closed forms per law family), deterministic and side-effect free;
// verdicts serialize to JSON with a stable field order.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bpire/env.hpp"
#include "bpire/rng.hpp"

namespace bpire::classify {

enum class Regime { Critical, Subcritical, Supercritical, Invalid };
enum class Verdict { RecurrentByThm3, TransientByThm4, PositiveRecurrentByLemma1, Inconclusive };

std::string regime_name(Regime r);
std::string verdict_name(Verdict v);

struct CheckedCondition {
  std::string criterion;  // "Thm3", "Thm4", "Lemma1", "model"
  std::string condition;
  bool pass = false;
  std::optional<double> quantity;  // the analytic value, when one exists
  bool quantity_is_bound = false;  // quantity is an upper bound, not the value
  std::string detail;
};

struct CriterionVerdict {
  Regime regime = Regime::Invalid;
  Verdict verdict = Verdict::Inconclusive;
  std::vector<CheckedCondition> checked_conditions;

  nlohmann::ordered_json to_json() const;
};

struct CriteriaParams {
  double epsilon = 0.1;                              // Thm3 log-moment margin
  std::vector<double> delta_grid = {1, 2, 3, 4, 5, 5.9};  // Thm4 delta diagnostics
};

CriterionVerdict evaluate_criteria(const env::EnvironmentSpec& spec, CriteriaParams params = {});

enum class SimpleVerdict { Recurrent, Transient };

// Classical excited walk (p == 1/2): recurrent iff E[M] <= 1.
SimpleVerdict classical_erw_oracle(double mean_m);

// ---- empirical classification -------------------------------------------

// Per-path digest consumed by empirical_classify: the first hitting time of
// zero (or the walk's return step), and log Z at growth checkpoints.
struct PathStats {
  std::optional<std::size_t> zero_at;
  std::vector<std::pair<std::size_t, double>> checkpoint_logs;
};

struct FractionRow {
  std::size_t horizon = 0;
  std::size_t count = 0;
  double fraction = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct EmpiricalParams {
  double band_lo = 0.2;  // abstain while the interval touches [band_lo, band_hi]
  double band_hi = 0.8;
  double significance = 0.01;
};

struct EmpiricalReport {
  std::size_t replicas = 0;
  std::vector<FractionRow> return_rows;            // hit-zero fraction per horizon
  std::vector<FractionRow> exceedance_rows;        // P[log Z_n > sqrt(n)] per checkpoint
  std::size_t trend_new_returns = 0;  // paths returning between first and last horizon
  std::string trend;                  // "flat" or "increasing"
  std::string leaning;                // "recurrent-leaning" | "transient-leaning" | "abstain"

  nlohmann::ordered_json to_json() const;
};

// Throws std::invalid_argument with fewer than 30 paths per horizon.
EmpiricalReport empirical_classify(std::span<const PathStats> paths,
                                   std::span<const std::size_t> horizons,
                                   EmpiricalParams params = {});

// ---- series <-> log-moment probe -----------------------------------------

struct ConstantV {
  double value = 1.0;
};
// log V Pareto: P[log V > t] = t^-index for t >= 1.
struct LogParetoV {
  double index = 1.0;
};
using VLaw = std::variant<ConstantV, LogParetoV>;

struct SeriesReplicaRow {
  double partial_sum = 0.0;  // at N terms (inf once diverged)
  double tail1 = 0.0;        // S_2N - S_N
  double tail2 = 0.0;        // S_4N - S_2N
  bool diverged = false;
};

struct SeriesProbeResult {
  std::vector<SeriesReplicaRow> replicas;
  double median_tail2 = 0.0;
  double diverged_fraction = 0.0;
};

// Partial sums of sum_n a^n sum_{i=0..floor(c n^{d-1})} V_{i,n} at outer term
// counts N, 2N, 4N. Tail increments vanish when E[(log+ V)^d] < inf and blow
// up on a positive fraction of replicas when it is infinite.
SeriesProbeResult series_moment_probe(int d, double a, double c, const VLaw& v_law,
                                      std::size_t partial_terms, std::size_t replicas,
                                      std::uint64_t seed);

}  // namespace bpire::classify
