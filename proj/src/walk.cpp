#include "bpire/walk.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "bpire/classify.hpp"

namespace bpire::walk {

const env::SiteEnv& CookieEnvironment::site(std::int64_t x) const {
  auto it = cache_.find(x);
  if (it != cache_.end()) return it->second;
  rng::Stream s(seed_, replica_, rng::Lane::Env, rng::zigzag(x));
  return cache_.emplace(x, env::sample_site(spec_, s)).first->second;
}

double CookieEnvironment::decision_uniform(std::int64_t x, std::uint64_t visit) const {
  assert(visit >= 1);
  rng::Stream s(seed_, replica_, rng::Lane::WalkDecision, rng::zigzag(x));
  return s.uniform_at(visit - 1);
}

double transition_prob(const CookieEnvironment& e, std::int64_t x, std::uint64_t i) {
  if (i < 1) throw std::invalid_argument("transition_prob: visit index starts at 1");
  const env::SiteEnv& site = e.site(x);
  return site.cookie_at_visit(i) ? 1.0 : site.p;
}

namespace {

struct Walker {
  const CookieEnvironment& e;
  const WalkOptions& opts;
  WalkPath& path;

  // one nearest-neighbor step from x upon its next visit
  std::int64_t step_from(std::int64_t x) {
    std::uint64_t visit = ++path.visit_counts[x];
    int dir;
    bool forced = false;
    if (opts.decision_override) {
      dir = opts.decision_override(x, visit);
      assert(dir == 1 || dir == -1);
    } else {
      const env::SiteEnv& site = e.site(x);
      if (site.cookie_at_visit(visit)) {
        dir = 1;
        forced = true;
      } else {
        dir = e.decision_uniform(x, visit) < site.p ? 1 : -1;
      }
    }
    if (opts.coupling && path.ledger && !forced) {
      auto& sl = path.ledger->sites[x];
      if (sl.marks.empty()) {
        const env::SiteEnv& site = e.site(x);
        sl.p = site.p;
        if (!site.m_exact) {
          throw std::invalid_argument(
              "coupling requires immigrant counts below the exact threshold");
        }
        sl.m = *site.m_exact;
      }
      sl.marks.push_back(dir == 1 ? 1 : 0);
    }
    return x + dir;
  }
};

}  // namespace

WalkPath simulate_walk(const CookieEnvironment& e, std::int64_t start, StopCondition stop,
                       WalkOptions opts) {
  WalkPath path;
  if (opts.coupling) path.ledger = CouplingLedger{};
  std::int64_t x = start;
  path.final_position = x;
  path.max_site = x;
  if (opts.record_positions) path.positions.push_back(x);
  Walker w{e, opts, path};
  for (std::size_t n = 0; n < stop.horizon; ++n) {
    x = w.step_from(x);
    ++path.steps;
    path.max_site = std::max(path.max_site, x);
    if (opts.record_positions) path.positions.push_back(x);
    path.final_position = x;
    if (stop.hit_site && x == *stop.hit_site) {
      path.stop_reason = StopReason::HitTarget;
      if (path.ledger) path.ledger->complete_excursion = true;
      return path;
    }
  }
  path.stop_reason = StopReason::HorizonExceeded;
  return path;
}

WalkPath simulate_right_excursion(const CookieEnvironment& e, std::size_t horizon,
                                  WalkOptions opts) {
  WalkPath path;
  if (opts.coupling) path.ledger = CouplingLedger{};
  // the excursion exists by fiat: S_0 = 0, S_1 = 1, site 0 untouched
  std::int64_t x = 1;
  path.steps = 1;
  path.max_site = 1;
  path.final_position = 1;
  if (opts.record_positions) {
    path.positions.push_back(0);
    path.positions.push_back(1);
  }
  Walker w{e, opts, path};
  while (path.steps < horizon) {
    x = w.step_from(x);
    ++path.steps;
    path.max_site = std::max(path.max_site, x);
    if (opts.record_positions) path.positions.push_back(x);
    path.final_position = x;
    if (x == 0) {
      path.stop_reason = StopReason::HitTarget;
      if (path.ledger) path.ledger->complete_excursion = true;
      return path;
    }
  }
  path.stop_reason = StopReason::HorizonExceeded;
  return path;
}

std::optional<std::size_t> first_passage(const WalkPath& path, std::int64_t k) {
  for (std::size_t n = 1; n < path.positions.size(); ++n) {
    if (path.positions[n] == k) return n;
  }
  return std::nullopt;
}

std::vector<std::uint64_t> upcrossing_counts(const WalkPath& path, bool allow_incomplete) {
  const auto& pos = path.positions;
  if (pos.size() < 2 || pos[0] != 0 || pos[1] != 1) {
    throw std::invalid_argument("upcrossing_counts: path is not a right excursion from 0");
  }
  bool completed = pos.back() == 0;
  if (!completed && !allow_incomplete) {
    throw std::invalid_argument("upcrossing_counts: excursion incomplete and not flagged");
  }
  std::int64_t max_level = 0;
  for (std::size_t n = 1; n + 1 < pos.size(); ++n) {
    if (pos[n] <= 0) throw std::invalid_argument("upcrossing_counts: path dips below 1 mid-excursion");
    max_level = std::max(max_level, pos[n]);
  }
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(max_level) + 1, 0);
  for (std::size_t n = 0; n + 1 < pos.size(); ++n) {
    if (pos[n + 1] == pos[n] + 1) ++counts[static_cast<std::size_t>(pos[n])];
  }
  return counts;
}

std::vector<std::uint64_t> branching_from_ledger(const CouplingLedger& ledger) {
  std::vector<std::uint64_t> v{1};
  for (std::int64_t k = 1;; ++k) {
    std::uint64_t prev = v.back();
    if (prev == 0) break;
    auto it = ledger.sites.find(k);
    if (it == ledger.sites.end()) {
      throw IncompleteLedgerError("branching_from_ledger: no decisions recorded at level " +
                                  std::to_string(k));
    }
    const SiteLedger& sl = it->second;
    // successes among the post-cookie decisions before the prev-th failure
    std::uint64_t failures = 0;
    std::uint64_t successes = 0;
    for (std::uint8_t mark : sl.marks) {
      if (mark) {
        ++successes;
      } else if (++failures == prev) {
        break;
      }
    }
    if (failures < prev) {
      throw IncompleteLedgerError("branching_from_ledger: ledger ends before the " +
                                  std::to_string(prev) + "-th failure at level " +
                                  std::to_string(k));
    }
    v.push_back(successes + sl.m);
  }
  return v;
}

RightRecurrenceReport classify_right_recurrence(const env::EnvironmentSpec& spec,
                                                std::size_t excursions, std::size_t horizon,
                                                std::uint64_t seed, bool coupling) {
  RightRecurrenceReport rep;
  rep.excursions = excursions;
  rep.horizon = horizon;
  rep.return_steps.reserve(excursions);

  for (std::size_t e = 0; e < excursions; ++e) {
    CookieEnvironment cenv(spec, seed, e);
    WalkOptions opts;
    opts.coupling = coupling;
    opts.record_positions = coupling;  // needed for the up-crossing counts
    WalkPath path = simulate_right_excursion(cenv, horizon, opts);
    bool returned = path.stop_reason == StopReason::HitTarget;
    if (returned) {
      ++rep.returned;
      rep.return_steps.push_back(path.steps);
    } else {
      ++rep.truncated;
      rep.return_steps.push_back(static_cast<std::size_t>(-1));
    }
    if (coupling && returned) {
      ++rep.coupled_total;
      auto u = upcrossing_counts(path);
      auto v = branching_from_ledger(*path.ledger);
      if (!v.empty() && v.back() == 0) ++rep.v_hit_zero;
      if (u == v) ++rep.coupled_matches;
    }
  }

  rep.return_fraction =
      excursions > 0 ? static_cast<double>(rep.returned) / static_cast<double>(excursions) : 0.0;
  auto ci = stats::wilson(rep.returned, excursions, 1.96);
  rep.ci_lo = ci.lo;
  rep.ci_hi = ci.hi;

  if (spec.classical_mode) {
    double mean_m = env::m_mean(spec.m_law);
    rep.classical_verdict =
        classify::classical_erw_oracle(mean_m) == classify::SimpleVerdict::Recurrent
            ? "recurrent"
            : "transient";
  }
  return rep;
}

}  // namespace bpire::walk
