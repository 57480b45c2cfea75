// Experiment configuration: a flat, typed key-value text format with one
// section per module ([experiment], [env], [classify], [walk]), JSON accepted
// as an alternative. Unknown keys are hard errors with a nearest-key hint;
// seed + config fully determine every emitted number.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpire/branching.hpp"
#include "bpire/env.hpp"

namespace bpire::config {

struct ExperimentConfig {
  // [experiment]
  std::string kind = "bpire";  // validate|bpire|walk|couple|ladder|ar|classify|reproduce-example
  std::uint64_t seed = 1;
  std::size_t replicas = 1000;
  std::vector<std::size_t> horizons = {10000};
  std::size_t workers = 1;
  std::string out_dir;  // CLI flag > config > BPIRELAB_OUT_DIR > "out"
  std::string format = "csv";  // csv | json
  std::string mode = "zero-start";  // zero-start | one-ancestor
  std::uint64_t exact_threshold = env::kDefaultExactThreshold;
  bool classical_mode = false;
  std::size_t sample_every = 1;  // row thinning for bpire CSV output

  // [env]
  std::string p_family = "two-point";  // two-point|discrete|logit-uniform|constant
  double p_a = 1.0 / 3.0;
  double p_w = 0.5;
  double p_value = 0.5;                       // constant family
  std::vector<std::pair<double, double>> p_atoms;  // discrete
  double p_b = 1.0;                           // logit-uniform half width
  std::string m_family = "constant";          // constant|finite|poisson|heavy-tail
  std::uint64_t m_value = 0;
  std::vector<std::pair<std::uint64_t, double>> m_atoms;
  double m_rate = 1.0;
  double m_lambda = 1.0;
  std::string offspring = "geometric";  // geometric | bernoulli

  // [classify]
  double epsilon = 0.1;
  std::vector<double> delta_grid = {1, 2, 3, 4, 5, 5.9};
  double band_lo = 0.2;
  double band_hi = 0.8;
  double significance = 0.01;
  std::vector<std::size_t> checkpoints = {100, 1000, 10000};

  // [walk]
  bool coupling = true;

  env::EnvironmentSpec env_spec() const;
  branching::StartMode start_mode() const;
  nlohmann::ordered_json echo() const;
};

struct ParseIssue {
  int line = 0;  // 0 when the input is JSON or the issue is semantic
  std::string field;
  std::string message;
};

struct ParseResult {
  std::optional<ExperimentConfig> config;
  std::vector<ParseIssue> issues;
};

ParseResult parse_config(const std::string& text);
ParseResult parse_config_file(const std::string& path);

}  // namespace bpire::config
