// Excited random walk in random environment. Site x carries M_x cookies;
// the first M_x visits step right deterministically, later visits step right
// with probability p_x. Decision uniforms are keyed by (site, visit index),
// so a right excursion and the branching recursion
//   V_0 = 1,  V_k = xi_1^(k) + ... + xi_{V_{k-1}}^(k) + M_k
// consume literally the same randomness: for every completed excursion the
// V sequence equals the per-level up-crossing counts exactly.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "bpire/env.hpp"
#include "bpire/rng.hpp"
#include "bpire/stats.hpp"

namespace bpire::walk {

// Lazily realized environment: revisiting a site always yields the same
// (p_x, M_x) because realization is a pure function of (seed, replica, site).
class CookieEnvironment {
 public:
  CookieEnvironment(env::EnvironmentSpec spec, std::uint64_t seed, std::uint64_t replica)
      : spec_(std::move(spec)), seed_(seed), replica_(replica) {}

  const env::SiteEnv& site(std::int64_t x) const;
  double decision_uniform(std::int64_t x, std::uint64_t visit) const;  // visit >= 1
  const env::EnvironmentSpec& spec() const { return spec_; }

 private:
  env::EnvironmentSpec spec_;
  std::uint64_t seed_;
  std::uint64_t replica_;
  mutable std::unordered_map<std::int64_t, env::SiteEnv> cache_;
};

double transition_prob(const CookieEnvironment& e, std::int64_t x, std::uint64_t i);

struct SiteLedger {
  double p = 0.5;
  std::uint64_t m = 0;                // exact cookie count
  std::vector<std::uint8_t> marks;    // post-cookie decisions, 1 = success
};

struct IncompleteLedgerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CouplingLedger {
  std::map<std::int64_t, SiteLedger> sites;
  bool complete_excursion = false;
};

enum class StopReason { HitTarget, HorizonExceeded };

struct WalkPath {
  std::vector<std::int64_t> positions;  // empty unless recorded
  std::unordered_map<std::int64_t, std::uint64_t> visit_counts;
  std::size_t steps = 0;
  std::int64_t final_position = 0;
  std::int64_t max_site = 0;
  StopReason stop_reason = StopReason::HorizonExceeded;
  std::optional<CouplingLedger> ledger;
};

struct StopCondition {
  std::optional<std::int64_t> hit_site;  // stop at first n >= 1 with S_n = k
  std::size_t horizon = 1000000;
};

struct WalkOptions {
  bool coupling = false;
  bool record_positions = true;
  // test hook: scripted +1/-1 decisions instead of the environment rule
  std::function<int(std::int64_t site, std::uint64_t visit)> decision_override;
};

WalkPath simulate_walk(const CookieEnvironment& e, std::int64_t start, StopCondition stop,
                       WalkOptions opts = {});

// Excursion to the right of 0: positions begin (0, 1) by construction and the
// walk runs until it first returns to 0 or the horizon cuts it off.
WalkPath simulate_right_excursion(const CookieEnvironment& e, std::size_t horizon,
                                  WalkOptions opts = {});

std::optional<std::size_t> first_passage(const WalkPath& path, std::int64_t k);

// U_k = number of steps k -> k+1, for k = 0..max level of the excursion.
// Rejects paths that are not right excursions; incomplete excursions must be
// explicitly allowed.
std::vector<std::uint64_t> upcrossing_counts(const WalkPath& path, bool allow_incomplete = false);

// V_0 = 1, V_k from the ledger's recorded success/failure marks; stops at the
// first V_k = 0. Throws IncompleteLedgerError when the excursion did not
// supply enough decisions.
std::vector<std::uint64_t> branching_from_ledger(const CouplingLedger& ledger);

struct RightRecurrenceReport {
  std::size_t excursions = 0;
  std::size_t horizon = 0;
  std::size_t returned = 0;
  double return_fraction = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t truncated = 0;          // not returned by the horizon
  std::size_t coupled_total = 0;      // completed excursions run with coupling
  std::size_t coupled_matches = 0;    // V == U exactly
  std::size_t v_hit_zero = 0;         // coupled V sequences that reached 0
  std::vector<std::size_t> return_steps;  // SIZE_MAX when not returned
  std::optional<std::string> classical_verdict;
};

RightRecurrenceReport classify_right_recurrence(const env::EnvironmentSpec& spec,
                                                std::size_t excursions, std::size_t horizon,
                                                std::uint64_t seed, bool coupling);

}  // namespace bpire::walk
