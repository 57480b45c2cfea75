#include "bpire/runner.hpp"

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "bpire/classify.hpp"
#include "bpire/ladder.hpp"
#include "bpire/recursion.hpp"
#include "bpire/stats.hpp"
#include "bpire/walk.hpp"

namespace bpire::runner {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto body = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

struct Emitter {
  const config::ExperimentConfig& cfg;
  fs::path dir;
  RunResult& result;

  void write_text(const std::string& name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    out << body;
    result.outputs.push_back(name);
  }

  void write_rows(const std::string& base, const std::string& schema,
                  const std::vector<std::string>& header,
                  const std::vector<std::vector<std::string>>& rows) {
    if (cfg.format == "json") {
      ordered_json arr = ordered_json::array();
      for (const auto& row : rows) {
        ordered_json obj;
        for (std::size_t i = 0; i < header.size(); ++i) obj[header[i]] = row[i];
        arr.push_back(std::move(obj));
      }
      ordered_json doc;
      doc["schema"] = schema;
      doc["rows"] = std::move(arr);
      write_text(base + ".json", doc.dump(2) + "\n");
      return;
    }
    std::string body = "# " + schema + "\n";
    for (std::size_t i = 0; i < header.size(); ++i) {
      body += header[i];
      body += (i + 1 < header.size()) ? ',' : '\n';
    }
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        body += row[i];
        body += (i + 1 < row.size()) ? ',' : '\n';
      }
    }
    write_text(base + ".csv", body);
  }

  void finish(const ordered_json& summary, bool complete) {
    write_text("summary.json", summary.dump(2) + "\n");
    ordered_json manifest;
    manifest["tool"] = "bpirelab";
    manifest["version"] = kVersion;
    manifest["kind"] = cfg.kind;
    manifest["seed"] = cfg.seed;
    manifest["config"] = cfg.echo();
    manifest["outputs"] = result.outputs;
    manifest["complete"] = complete;
    write_text("manifest.json", manifest.dump(2) + "\n");
  }
};

ordered_json fraction_json(std::size_t count, std::size_t total, double z) {
  auto ci = stats::wilson(count, total, z);
  ordered_json j;
  j["count"] = count;
  j["total"] = total;
  j["fraction"] = total ? static_cast<double>(count) / static_cast<double>(total) : 0.0;
  j["ci_lo"] = ci.lo;
  j["ci_hi"] = ci.hi;
  return j;
}

ordered_json validation_json(const env::ValidationReport& rep) {
  ordered_json j;
  j["ok"] = rep.ok;
  j["classical_mode"] = rep.classical_mode;
  j["log_rho_mean"] = rep.log_rho_mean;
  j["mean_log_rho_zero"] = rep.mean_log_rho_zero;
  j["prob_p_half"] = rep.prob_p_half;
  j["prob_m_zero"] = rep.prob_m_zero;
  if (std::isinf(rep.m_tail_exponent)) {
    j["m_tail_exponent"] = nullptr;
  } else {
    j["m_tail_exponent"] = rep.m_tail_exponent;
  }
  ordered_json moms = ordered_json::array();
  for (const auto& m : rep.rho_moments) moms.push_back({{"delta", m.order}, {"value", m.value}});
  j["rho_moments"] = std::move(moms);
  ordered_json lm = ordered_json::array();
  for (const auto& m : rep.m_log_moments) lm.push_back({{"q", m.order}, {"finite", m.finite}});
  j["m_log_moments"] = std::move(lm);
  ordered_json viols = ordered_json::array();
  for (const auto& v : rep.violations) {
    viols.push_back({{"assumption", v.assumption}, {"detail", v.detail}});
  }
  j["violations"] = std::move(viols);
  return j;
}

int run_validate(const config::ExperimentConfig& cfg, Emitter& em) {
  auto rep = env::validate_spec(cfg.env_spec(), cfg.delta_grid);
  ordered_json summary;
  summary["kind"] = "validate";
  summary["report"] = validation_json(rep);
  em.finish(summary, true);
  if (!rep.ok) {
    em.result.message = "spec violates assumption " + rep.violations.front().assumption + ": " +
                        rep.violations.front().detail;
    return SpecViolation;
  }
  return Ok;
}

int run_bpire(const config::ExperimentConfig& cfg, Emitter& em) {
  env::EnvironmentSpec spec = cfg.env_spec();
  std::size_t horizon = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
  std::vector<std::string> row_chunks(cfg.replicas);
  std::vector<classify::PathStats> all_stats(cfg.replicas);

  std::vector<std::size_t> cps;
  for (std::size_t c : cfg.checkpoints)
    if (c <= horizon) cps.push_back(c);

  parallel_for(cfg.replicas, cfg.workers, [&](std::size_t r) {
    rng::StreamSet ss{cfg.seed, r};
    branching::SimOptions opts;
    opts.mode = cfg.start_mode();
    auto path = branching::simulate(spec, horizon, ss, opts);
    std::string rows;
    std::string hz = path.hit_zero_at ? std::to_string(*path.hit_zero_at) : "";
    for (std::size_t n = 0; n < path.populations.size(); n += cfg.sample_every) {
      const auto& z = path.populations[n];
      rows += std::to_string(r);
      rows += ',';
      rows += std::to_string(n);
      rows += ',';
      rows += z.is_log ? format_double(z.log_value) : std::to_string(z.count);
      rows += ',';
      rows += z.is_log ? '1' : '0';
      rows += ',';
      rows += hz;
      rows += '\n';
    }
    row_chunks[r] = std::move(rows);
    classify::PathStats st;
    st.zero_at = path.hit_zero_at;
    for (std::size_t c : cps) st.checkpoint_logs.emplace_back(c, path.populations[c].log());
    all_stats[r] = std::move(st);
  });

  // assemble in replica order: byte-identical at any worker count
  std::string body = "# bpire.v1\nreplica,generation,population_or_log,is_log,hit_zero_at\n";
  for (auto& chunk : row_chunks) body += chunk;
  if (cfg.format == "csv") {
    em.write_text("bpire.csv", body);
  } else {
    std::vector<std::vector<std::string>> rows;  // JSON mirror of the same rows
    for (std::size_t r = 0; r < cfg.replicas; ++r) {
      std::stringstream ss(row_chunks[r]);
      std::string line;
      while (std::getline(ss, line)) {
        std::vector<std::string> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        while (row.size() < 5) row.emplace_back();
        rows.push_back(std::move(row));
      }
    }
    em.write_rows("bpire", "bpire.v1",
                  {"replica", "generation", "population_or_log", "is_log", "hit_zero_at"}, rows);
  }

  ordered_json summary;
  summary["kind"] = "bpire";
  summary["replicas"] = cfg.replicas;
  summary["horizon"] = horizon;
  double z = stats::normal_quantile(1.0 - cfg.significance / 2.0);
  ordered_json hz_rows = ordered_json::array();
  for (std::size_t h : cfg.horizons) {
    std::size_t k = 0;
    for (const auto& st : all_stats)
      if (st.zero_at && *st.zero_at <= h) ++k;
    ordered_json row = fraction_json(k, cfg.replicas, z);
    row["horizon"] = h;
    hz_rows.push_back(std::move(row));
  }
  summary["hit_zero"] = std::move(hz_rows);
  ordered_json ex_rows = ordered_json::array();
  for (std::size_t i = 0; i < cps.size(); ++i) {
    std::size_t k = 0;
    for (const auto& st : all_stats)
      if (st.checkpoint_logs[i].second > std::sqrt(static_cast<double>(cps[i]))) ++k;
    ordered_json row = fraction_json(k, cfg.replicas, z);
    row["n"] = cps[i];
    ex_rows.push_back(std::move(row));
  }
  summary["exceedance"] = std::move(ex_rows);
  em.finish(summary, true);
  return Ok;
}

int run_walk(const config::ExperimentConfig& cfg, Emitter& em) {
  env::EnvironmentSpec spec = cfg.env_spec();
  std::size_t horizon = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
  struct Row {
    bool returned;
    std::size_t steps;
    std::int64_t max_site;
  };
  std::vector<Row> rows(cfg.replicas);
  parallel_for(cfg.replicas, cfg.workers, [&](std::size_t r) {
    walk::CookieEnvironment cenv(spec, cfg.seed, r);
    walk::WalkOptions opts;
    opts.record_positions = false;
    auto path = walk::simulate_right_excursion(cenv, horizon, opts);
    rows[r] = {path.stop_reason == walk::StopReason::HitTarget, path.steps, path.max_site};
  });

  std::vector<std::vector<std::string>> cells;
  cells.reserve(cfg.replicas);
  for (std::size_t r = 0; r < cfg.replicas; ++r) {
    cells.push_back({std::to_string(r), rows[r].returned ? "1" : "0",
                     std::to_string(rows[r].steps), std::to_string(rows[r].max_site)});
  }
  em.write_rows("walk", "walk-excursion.v1", {"replica", "returned", "steps", "max_site"}, cells);

  ordered_json summary;
  summary["kind"] = "walk";
  summary["excursions"] = cfg.replicas;
  double z = stats::normal_quantile(1.0 - cfg.significance / 2.0);
  ordered_json frac_rows = ordered_json::array();
  for (std::size_t h : cfg.horizons) {
    std::size_t k = 0;
    for (const auto& row : rows)
      if (row.returned && row.steps <= h) ++k;
    ordered_json jr = fraction_json(k, cfg.replicas, z);
    jr["horizon"] = h;
    frac_rows.push_back(std::move(jr));
  }
  summary["returned_by_horizon"] = std::move(frac_rows);
  if (spec.classical_mode) {
    summary["classical_oracle"] =
        classify::classical_erw_oracle(env::m_mean(spec.m_law)) ==
                classify::SimpleVerdict::Recurrent
            ? "recurrent"
            : "transient";
  }
  em.finish(summary, true);
  return Ok;
}

int run_couple(const config::ExperimentConfig& cfg, Emitter& em) {
  env::EnvironmentSpec spec = cfg.env_spec();
  std::size_t horizon = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
  std::size_t target = cfg.replicas;  // completed excursions wanted
  std::size_t attempts_cap = target * 2 + 64;

  struct Row {
    std::size_t replica;
    bool returned;
    std::size_t levels;
    bool match;
  };
  std::vector<Row> rows(attempts_cap);
  std::vector<std::uint8_t> used(attempts_cap, 0);

  // deterministic attempt sweep: completed excursions are a deterministic
  // subset of replica ids, so the target set is scheduling-independent
  std::atomic<std::size_t> completed{0};
  parallel_for(attempts_cap, cfg.workers, [&](std::size_t r) {
    if (completed.load() >= target) return;  // soft cutoff; ordering fixed below
    walk::CookieEnvironment cenv(spec, cfg.seed, r);
    walk::WalkOptions opts;
    opts.coupling = true;
    auto path = walk::simulate_right_excursion(cenv, horizon, opts);
    bool returned = path.stop_reason == walk::StopReason::HitTarget;
    bool match = false;
    std::size_t levels = 0;
    if (returned) {
      auto u = walk::upcrossing_counts(path);
      auto v = walk::branching_from_ledger(*path.ledger);
      match = u == v;
      levels = u.size();
      completed.fetch_add(1);
    }
    rows[r] = {r, returned, levels, match};
    used[r] = 1;
  });

  // take completed excursions in replica order until the target is reached
  std::size_t taken = 0, matches = 0, truncated = 0, attempts = 0;
  std::vector<std::vector<std::string>> cells;
  for (std::size_t r = 0; r < attempts_cap && taken < target; ++r) {
    if (!used[r]) continue;  // skipped by the soft cutoff
    ++attempts;
    if (!rows[r].returned) {
      ++truncated;
      continue;
    }
    ++taken;
    if (rows[r].match) ++matches;
    cells.push_back({std::to_string(rows[r].replica), "1", std::to_string(rows[r].levels),
                     rows[r].match ? "1" : "0"});
  }
  em.write_rows("couple", "couple.v1", {"replica", "returned", "levels", "exact_match"}, cells);

  ordered_json summary;
  summary["kind"] = "couple";
  summary["excursions"] = taken;
  summary["exact_coupling_matches"] = std::to_string(matches) + "/" + std::to_string(taken);
  summary["truncated_excursions"] = truncated;
  summary["attempts"] = attempts;
  summary["horizon"] = horizon;
  em.finish(summary, taken == target);
  if (taken < target) {
    em.result.message = "horizon too short to complete the requested excursions";
    return ResourceLimit;
  }
  return Ok;
}

int run_ladder(const config::ExperimentConfig& cfg, Emitter& em) {
  env::EnvironmentSpec spec = cfg.env_spec();
  std::size_t horizon = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
  std::vector<std::string> chunks(cfg.replicas);
  parallel_for(cfg.replicas, cfg.workers, [&](std::size_t r) {
    rng::Stream s(cfg.seed, r, rng::Lane::Ladder);
    std::vector<double> mus;
    mus.reserve(horizon);
    for (std::size_t k = 0; k < horizon; ++k) {
      env::SiteEnv site = env::sample_site(spec, s);
      mus.push_back(spec.offspring == env::OffspringFamily::Geometric
                        ? -std::log(env::rho(site.p))
                        : std::log(site.p));
    }
    auto y = ladder::LogMeanWalk::from_log_mus(std::move(mus));
    auto dec = ladder::descending_ladder_epochs(y, horizon);
    std::string rows;
    for (std::size_t n = 1; n < dec.epochs.size(); ++n) {
      rows += std::to_string(r);
      rows += ',';
      rows += std::to_string(n);
      rows += ',';
      rows += std::to_string(dec.epochs[n]);
      rows += '\n';
    }
    chunks[r] = std::move(rows);
  });
  std::string body = "# ladder.v1\nreplica,n,L_n\n";
  for (auto& c : chunks) body += c;
  em.write_text(cfg.format == "json" ? "ladder.txt" : "ladder.csv", body);

  std::vector<std::size_t> cps;
  for (std::size_t c : cfg.checkpoints)
    if (c <= horizon) cps.push_back(c);
  if (cps.empty()) cps = {horizon / 2, horizon};
  auto table = ladder::ladder_tail_estimate(spec, horizon, cfg.replicas, cfg.seed + 1, cps);

  ordered_json summary;
  summary["kind"] = "ladder";
  summary["replicas"] = cfg.replicas;
  summary["degenerate"] = table.degenerate;
  summary["spec_critical"] = table.spec_critical;
  ordered_json rows = ordered_json::array();
  for (const auto& row : table.rows) {
    rows.push_back({{"n", row.n},
                    {"survival", row.survival},
                    {"std_error", row.std_error},
                    {"sqrt_scaled", row.sqrt_scaled}});
  }
  summary["tail"] = std::move(rows);
  em.finish(summary, true);
  return Ok;
}

int run_ar(const config::ExperimentConfig& cfg, Emitter& em) {
  env::EnvironmentSpec spec = cfg.env_spec();
  std::vector<std::size_t> cps = cfg.checkpoints;
  std::sort(cps.begin(), cps.end());
  std::size_t horizon = cps.back();
  std::vector<std::vector<std::uint8_t>> hits(cfg.replicas);
  parallel_for(cfg.replicas, cfg.workers, [&](std::size_t r) {
    rng::StreamSet ss{cfg.seed, r};
    recursion::PosReal x = recursion::PosReal::from_linear(0.0);
    std::vector<std::uint8_t> h(cps.size(), 0);
    std::size_t ci = 0;
    for (std::size_t i = 1; i <= horizon; ++i) {
      rng::Stream s = ss.lane(rng::Lane::Ar, i);
      auto e = recursion::sample_ar_env(spec, s);
      x = recursion::ar_step(x, e.mu, e.m);
      while (ci < cps.size() && cps[ci] == i) {
        h[ci] = x.log() > std::sqrt(static_cast<double>(i)) ? 1 : 0;
        ++ci;
      }
    }
    hits[r] = std::move(h);
  });

  double z = stats::normal_quantile(1.0 - cfg.significance / 2.0);
  std::vector<std::vector<std::string>> cells;
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < cps.size(); ++i) {
    std::size_t k = 0;
    for (const auto& h : hits) k += h[i];
    auto ci = stats::wilson(k, cfg.replicas, z);
    cells.push_back({std::to_string(cps[i]), std::to_string(k), std::to_string(cfg.replicas),
                     format_double(static_cast<double>(k) / static_cast<double>(cfg.replicas)),
                     format_double(ci.lo), format_double(ci.hi)});
    ordered_json row = fraction_json(k, cfg.replicas, z);
    row["n"] = cps[i];
    rows.push_back(std::move(row));
  }
  em.write_rows("ar", "ar.v1", {"n", "exceedances", "replicas", "frequency", "ci_lo", "ci_hi"},
                cells);
  ordered_json summary;
  summary["kind"] = "ar";
  summary["replicas"] = cfg.replicas;
  summary["exceedance"] = std::move(rows);
  em.finish(summary, true);
  return Ok;
}

int run_classify(const config::ExperimentConfig& cfg, Emitter& em) {
  env::EnvironmentSpec spec = cfg.env_spec();
  classify::CriteriaParams params;
  params.epsilon = cfg.epsilon;
  params.delta_grid = cfg.delta_grid;
  auto verdict = classify::evaluate_criteria(spec, params);

  std::size_t horizon = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
  std::vector<std::size_t> cps;
  for (std::size_t c : cfg.checkpoints)
    if (c <= horizon) cps.push_back(c);
  std::vector<classify::PathStats> paths(cfg.replicas);
  parallel_for(cfg.replicas, cfg.workers, [&](std::size_t r) {
    rng::StreamSet ss{cfg.seed, r};
    auto sum = branching::simulate_summary(spec, horizon, ss, cps, cfg.start_mode());
    classify::PathStats st;
    st.zero_at = sum.hit_zero_at;
    st.checkpoint_logs = std::move(sum.checkpoint_logs);
    paths[r] = std::move(st);
  });
  classify::EmpiricalParams ep;
  ep.band_lo = cfg.band_lo;
  ep.band_hi = cfg.band_hi;
  ep.significance = cfg.significance;
  auto rep = classify::empirical_classify(paths, cfg.horizons, ep);

  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rep.return_rows) {
    cells.push_back({std::to_string(row.horizon), format_double(row.fraction),
                     format_double(row.ci_lo), format_double(row.ci_hi)});
  }
  em.write_rows("classify", "classify.v1", {"horizon", "fraction", "ci_lo", "ci_hi"}, cells);

  ordered_json summary;
  summary["kind"] = "classify";
  summary["verdict"] = classify::verdict_name(verdict.verdict);
  summary["criteria"] = verdict.to_json();
  summary["empirical"] = rep.to_json();
  em.finish(summary, true);
  return Ok;
}

int run_reproduce_example(const config::ExperimentConfig& cfg, Emitter& em) {
  // the heavy-tailed example environment over a symmetric two-point p-law
  config::ExperimentConfig ex = cfg;
  ex.p_family = "two-point";
  ex.m_family = "heavy-tail";
  ex.offspring = "geometric";
  env::EnvironmentSpec spec = ex.env_spec();
  classify::CriteriaParams params;
  params.epsilon = cfg.epsilon;
  params.delta_grid = cfg.delta_grid;
  auto verdict = classify::evaluate_criteria(spec, params);

  ordered_json summary;
  summary["kind"] = "reproduce-example";
  summary["lambda"] = cfg.m_lambda;
  summary["verdict"] = classify::verdict_name(verdict.verdict);
  summary["criteria"] = verdict.to_json();
  em.finish(summary, true);
  return Ok;
}

}  // namespace

RunResult run(const config::ExperimentConfig& cfg) {
  RunResult result;
  fs::path dir = cfg.out_dir.empty() ? fs::path("out") : fs::path(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    result.exit_code = ConfigError;
    result.message = "cannot create output directory '" + dir.string() + "'";
    return result;
  }
  Emitter em{cfg, dir, result};

  // walk-facing kinds enforce the model assumptions; branching-only kinds
  // need only a well-formed law pair
  if (cfg.kind == "walk" || cfg.kind == "couple") {
    auto rep = env::validate_spec(cfg.env_spec(), cfg.delta_grid);
    if (!rep.ok) {
      result.exit_code = SpecViolation;
      result.message = "spec violates assumption " + rep.violations.front().assumption + ": " +
                       rep.violations.front().detail;
      ordered_json summary;
      summary["kind"] = cfg.kind;
      summary["error"] = result.message;
      summary["report"] = validation_json(rep);
      em.finish(summary, false);
      return result;
    }
  }

  try {
    if (cfg.kind == "validate") {
      result.exit_code = run_validate(cfg, em);
    } else if (cfg.kind == "bpire") {
      result.exit_code = run_bpire(cfg, em);
    } else if (cfg.kind == "walk") {
      result.exit_code = run_walk(cfg, em);
    } else if (cfg.kind == "couple") {
      result.exit_code = run_couple(cfg, em);
    } else if (cfg.kind == "ladder") {
      result.exit_code = run_ladder(cfg, em);
    } else if (cfg.kind == "ar") {
      result.exit_code = run_ar(cfg, em);
    } else if (cfg.kind == "classify") {
      result.exit_code = run_classify(cfg, em);
    } else if (cfg.kind == "reproduce-example") {
      result.exit_code = run_reproduce_example(cfg, em);
    } else {
      result.exit_code = ConfigError;
      result.message = "unknown kind '" + cfg.kind + "'";
      return result;
    }
  } catch (const branching::ResourceLimitError& e) {
    result.exit_code = ResourceLimit;
    result.message = e.what();
    return result;
  } catch (const std::exception& e) {
    result.exit_code = ConfigError;
    result.message = e.what();
    return result;
  }

  // summary was written by the kind handler; load it back for the caller
  std::ifstream in(dir / "summary.json");
  if (in) {
    try {
      result.summary = ordered_json::parse(in);
    } catch (...) {
    }
  }
  return result;
}

}  // namespace bpire::runner
