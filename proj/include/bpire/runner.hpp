// Batch experiment runner: executes a parsed config across seeded parallel
// replicas and writes a manifest, a CSV (or JSON rows) file and a JSON
// summary. Replica randomness is keyed by (seed, replica, lane, index), and
// per-replica results land in replica-indexed slots before serialization, so
// the emitted bytes are independent of the worker count.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bpire/config.hpp"

namespace bpire::runner {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int {
  Ok = 0,
  ConfigError = 2,
  SpecViolation = 3,
  ResourceLimit = 4,
};

struct RunResult {
  int exit_code = Ok;
  std::string message;
  std::vector<std::string> outputs;  // files written, relative to out_dir
  nlohmann::ordered_json summary;
};

RunResult run(const config::ExperimentConfig& cfg);

// Shared worker pool; fn(i) must touch only slot i of any shared state.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

std::string format_double(double v);

}  // namespace bpire::runner
