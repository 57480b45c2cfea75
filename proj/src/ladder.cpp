#include "bpire/ladder.hpp"

#include <cmath>
#include <stdexcept>

namespace bpire::ladder {

LogMeanWalk LogMeanWalk::from_log_mus(std::vector<double> log_mus) {
  LogMeanWalk w;
  w.log_mus = std::move(log_mus);
  w.values.reserve(w.log_mus.size() + 1);
  w.values.push_back(0.0);
  for (double x : w.log_mus) w.values.push_back(w.values.back() + x);
  return w;
}

LogMeanWalk LogMeanWalk::from_envs(std::span<const branching::GenEnv> envs) {
  std::vector<double> mus;
  mus.reserve(envs.size());
  for (const auto& e : envs) mus.push_back(e.law.log_mean());
  return from_log_mus(std::move(mus));
}

LadderDecomposition descending_ladder_epochs(const LogMeanWalk& y, std::size_t horizon) {
  if (horizon >= y.values.size()) {
    throw std::invalid_argument("descending_ladder_epochs: horizon exceeds walk length");
  }
  LadderDecomposition out;
  out.horizon = horizon;
  out.epochs.push_back(0);
  double last_min = 0.0;
  for (std::size_t k = 1; k <= horizon; ++k) {
    if (y.values[k] < last_min) {
      out.epochs.push_back(k);
      last_min = y.values[k];
    }
  }
  // the walk past the last epoch has not descended again by the horizon
  out.incomplete_final_block = out.epochs.back() < horizon;
  return out;
}

double composed_pgf(std::span<const branching::OffspringLaw> block, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("composed_pgf: s must lie in [0,1]");
  double v = s;
  for (std::size_t i = block.size(); i-- > 0;) v = block[i].pgf(v);
  return v;
}

double composed_log_mean(std::span<const branching::OffspringLaw> block) {
  double sum = 0.0;
  for (const auto& law : block) sum += law.log_mean();
  return sum;
}

std::vector<branching::Population> subprocess_extract(const branching::BranchingPath& path,
                                                      std::span<const std::size_t> epochs) {
  std::vector<branching::Population> out;
  out.reserve(epochs.size());
  for (std::size_t e : epochs) {
    if (e >= path.populations.size()) {
      throw std::out_of_range("subprocess_extract: epoch exceeds path length");
    }
    out.push_back(path.populations[e]);
  }
  return out;
}

branching::Population block_immigrants(std::span<const branching::GenEnv> block, rng::Stream& s,
                                       std::uint64_t threshold) {
  // line j enters with M_j and reproduces through laws j+1 .. end
  branching::Population total = branching::Population::exact(0);
  for (std::size_t j = 0; j < block.size(); ++j) {
    branching::Population z = block[j].m;
    for (std::size_t i = j + 1; i < block.size(); ++i) {
      z = branching::offspring_sum(block[i].law, z, s, threshold);
    }
    total = branching::add(total, z, threshold);
  }
  return total;
}

double block_immigrants_mean(std::span<const branching::GenEnv> block) {
  double mean = 0.0;
  double suffix_mu = 1.0;  // mu_{j+1} * ... * mu_end while scanning backwards
  for (std::size_t j = block.size(); j-- > 0;) {
    if (block[j].m.is_log) {
      throw std::invalid_argument("block_immigrants_mean: immigrant count beyond exact range");
    }
    mean += static_cast<double>(block[j].m.count) * suffix_mu;
    suffix_mu *= block[j].law.mean();
  }
  return mean;
}

LadderTailTable ladder_tail_estimate(const env::EnvironmentSpec& spec, std::size_t n_max,
                                     std::size_t replicas, std::uint64_t seed,
                                     std::span<const std::size_t> checkpoints) {
  LadderTailTable table;
  table.replicas = replicas;

  auto crit = branching::classify_criticality(spec);
  table.spec_critical = crit == branching::Criticality::Critical;

  // Q[mu = 1] = 1 means Y == 0: the walk never strictly descends
  bool mu_always_one = true;
  auto atoms = env::p_atoms(spec.p_law);
  if (spec.offspring == env::OffspringFamily::Geometric && !atoms.empty()) {
    for (const auto& [p, w] : atoms) {
      if (w > 0.0 && std::fabs(p - 0.5) > 1e-15) mu_always_one = false;
    }
  } else {
    mu_always_one = false;
  }
  if (mu_always_one) {
    table.degenerate = true;
    return table;
  }

  std::vector<std::size_t> cps(checkpoints.begin(), checkpoints.end());
  if (cps.empty()) {
    for (std::size_t n = 1; n <= n_max; ++n) cps.push_back(n);
  }

  std::vector<std::uint64_t> beyond(cps.size(), 0);  // counts of L > n
  for (std::size_t r = 0; r < replicas; ++r) {
    rng::Stream s(seed, r, rng::Lane::Ladder);
    double y = 0.0;
    std::size_t l = n_max + 1;  // sentinel for L > n_max
    for (std::size_t k = 1; k <= n_max; ++k) {
      env::SiteEnv site = env::sample_site(spec, s);
      double log_mu = spec.offspring == env::OffspringFamily::Geometric
                          ? -std::log(env::rho(site.p))
                          : std::log(site.p);
      y += log_mu;
      if (y < 0.0) {
        l = k;
        break;
      }
    }
    for (std::size_t i = 0; i < cps.size(); ++i) {
      if (l > cps[i]) ++beyond[i];
    }
  }

  for (std::size_t i = 0; i < cps.size(); ++i) {
    double n = static_cast<double>(cps[i]);
    double surv = static_cast<double>(beyond[i]) / static_cast<double>(replicas);
    double se = std::sqrt(surv * (1.0 - surv) / static_cast<double>(replicas));
    table.rows.push_back({cps[i], surv, se, surv * std::sqrt(n)});
  }
  return table;
}

}  // namespace bpire::ladder
