// Ladder-epoch machinery for critical environments: the log-mean walk
// Y_n = log(mu_1 ... mu_n), its strict descending ladder epochs
// L_n = inf{k > L_{n-1} : Y_k < Y_{L_{n-1}}}, the subprocess (Z_{L_n}) with
// block-composed generating functions, the block immigrant totals, and a
// Monte Carlo table for the 1/sqrt(n) decay of P[L > n].

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bpire/branching.hpp"

namespace bpire::ladder {

struct LogMeanWalk {
  std::vector<double> values;   // Y_0 = 0, Y_n = Y_{n-1} + log mu_n
  std::vector<double> log_mus;  // increments, log_mus[n-1] = log mu_n

  static LogMeanWalk from_log_mus(std::vector<double> log_mus);
  static LogMeanWalk from_envs(std::span<const branching::GenEnv> envs);
};

struct LadderDecomposition {
  std::vector<std::size_t> epochs;   // L_0 = 0 < L_1 < ...
  bool incomplete_final_block = false;  // horizon cut the next descent short
  std::size_t horizon = 0;
};

LadderDecomposition descending_ladder_epochs(const LogMeanWalk& y, std::size_t horizon);

// lambda(s) = phi_first(phi_first+1(...(phi_last(s))...)); right-to-left.
double composed_pgf(std::span<const branching::OffspringLaw> block, double s);
// log of the composed derivative at 1, i.e. sum of the block's log means.
double composed_log_mean(std::span<const branching::OffspringLaw> block);

std::vector<branching::Population> subprocess_extract(const branching::BranchingPath& path,
                                                      std::span<const std::size_t> epochs);

// One draw of M~ = sum of the immigrant lines started inside the block and
// run to the block end. `block` covers generations L_{n-1}+1 .. L_n in order.
branching::Population block_immigrants(std::span<const branching::GenEnv> block, rng::Stream& s,
                                       std::uint64_t threshold);
// E[M~ | env] = sum_j M_j mu_{j+1} ... mu_{L_n}; requires exact immigrant counts.
double block_immigrants_mean(std::span<const branching::GenEnv> block);

struct LadderTailRow {
  std::size_t n = 0;
  double survival = 0.0;      // empirical P[L > n]
  double std_error = 0.0;
  double sqrt_scaled = 0.0;   // survival * sqrt(n)
};

struct LadderTailTable {
  std::vector<LadderTailRow> rows;
  std::size_t replicas = 0;
  bool degenerate = false;     // Q[mu = 1] = 1: Y never descends, L = inf
  bool spec_critical = true;   // warning flag when the spec is not critical
  double mean_epoch_count = 0.0;  // unused by the tail rows; kept 0 here
};

// Empirical survival of L = L_1 at each n in `checkpoints` (or 1..n_max when
// empty), replica r keyed by (seed, r).
LadderTailTable ladder_tail_estimate(const env::EnvironmentSpec& spec, std::size_t n_max,
                                     std::size_t replicas, std::uint64_t seed,
                                     std::span<const std::size_t> checkpoints = {});

}  // namespace bpire::ladder
