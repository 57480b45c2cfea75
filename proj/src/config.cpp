#include "bpire/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace bpire::config {

namespace {

const std::map<std::string, std::vector<std::string>> kSchema = {
    {"experiment",
     {"kind", "seed", "replicas", "horizon", "horizons", "workers", "out_dir", "format", "mode",
      "exact_threshold", "classical_mode", "sample_every"}},
    {"env",
     {"p_family", "p_a", "p_w", "p_value", "p_atoms", "p_b", "m_family", "m_value", "m_atoms",
      "m_rate", "m_lambda", "offspring"}},
    {"classify",
     {"epsilon", "delta_grid", "band_lo", "band_hi", "significance", "checkpoints"}},
    {"walk", {"coupling"}},
};

const std::vector<std::string> kKinds = {"validate", "bpire",    "walk",     "couple",
                                         "ladder",   "ar",       "classify", "reproduce-example"};

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest_key(const std::string& key, const std::string& section) {
  std::string best;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (const auto& [sec, keys] : kSchema) {
    if (!section.empty() && sec != section) continue;
    for (const auto& k : keys) {
      std::size_t d = edit_distance(key, k);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
  }
  return best;
}

std::string trim(std::string s) {
  auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

struct Assigner {
  ExperimentConfig& cfg;
  std::vector<ParseIssue>& issues;
  int line = 0;

  void fail(const std::string& field, const std::string& msg) {
    issues.push_back({line, field, msg});
  }

  bool to_u64(const std::string& field, const std::string& v, std::uint64_t& out) {
    try {
      std::size_t pos = 0;
      out = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      return true;
    } catch (...) {
      fail(field, "expected an unsigned integer, got '" + v + "'");
      return false;
    }
  }

  bool to_double(const std::string& field, const std::string& v, double& out) {
    try {
      std::size_t pos = 0;
      out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      return true;
    } catch (...) {
      fail(field, "expected a number, got '" + v + "'");
      return false;
    }
  }

  bool to_bool(const std::string& field, const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes") {
      out = true;
      return true;
    }
    if (v == "false" || v == "0" || v == "no") {
      out = false;
      return true;
    }
    fail(field, "expected true/false, got '" + v + "'");
    return false;
  }

  template <typename T, typename F>
  void to_list(const std::string& field, const std::string& v, std::vector<T>& out, F item) {
    out.clear();
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      T x;
      if (!item(field, trim(tok), x)) return;
      out.push_back(x);
    }
  }

  // "a:b,c:d" pairs
  template <typename K>
  void to_atoms(const std::string& field, const std::string& v,
                std::vector<std::pair<K, double>>& out) {
    out.clear();
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      auto colon = tok.find(':');
      if (colon == std::string::npos) {
        fail(field, "expected value:weight pairs, got '" + tok + "'");
        return;
      }
      std::string val = trim(tok.substr(0, colon));
      std::string wt = trim(tok.substr(colon + 1));
      double w;
      if (!to_double(field, wt, w)) return;
      if constexpr (std::is_same_v<K, double>) {
        double x;
        if (!to_double(field, val, x)) return;
        out.emplace_back(x, w);
      } else {
        std::uint64_t x;
        if (!to_u64(field, val, x)) return;
        out.emplace_back(x, w);
      }
    }
  }

  void assign(const std::string& section, const std::string& key, const std::string& value) {
    auto sec = kSchema.find(section);
    if (sec == kSchema.end()) {
      fail(section, "unknown section [" + section + "]");
      return;
    }
    if (std::find(sec->second.begin(), sec->second.end(), key) == sec->second.end()) {
      fail(key, "unknown key '" + key + "' (nearest valid key: '" + nearest_key(key, section) +
                    "')");
      return;
    }
    if (section == "experiment") {
      if (key == "kind") cfg.kind = value;
      else if (key == "seed") to_u64(key, value, cfg.seed);
      else if (key == "replicas") { std::uint64_t x; if (to_u64(key, value, x)) cfg.replicas = x; }
      else if (key == "horizon") { std::uint64_t x; if (to_u64(key, value, x)) cfg.horizons = {x}; }
      else if (key == "horizons")
        to_list<std::size_t>(key, value, cfg.horizons,
                             [this](const std::string& f, const std::string& v, std::size_t& x) {
                               std::uint64_t u;
                               if (!to_u64(f, v, u)) return false;
                               x = u;
                               return true;
                             });
      else if (key == "workers") { std::uint64_t x; if (to_u64(key, value, x)) cfg.workers = x; }
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "format") cfg.format = value;
      else if (key == "mode") cfg.mode = value;
      else if (key == "exact_threshold") to_u64(key, value, cfg.exact_threshold);
      else if (key == "classical_mode") to_bool(key, value, cfg.classical_mode);
      else if (key == "sample_every") { std::uint64_t x; if (to_u64(key, value, x)) cfg.sample_every = x; }
    } else if (section == "env") {
      if (key == "p_family") cfg.p_family = value;
      else if (key == "p_a") to_double(key, value, cfg.p_a);
      else if (key == "p_w") to_double(key, value, cfg.p_w);
      else if (key == "p_value") to_double(key, value, cfg.p_value);
      else if (key == "p_atoms") to_atoms<double>(key, value, cfg.p_atoms);
      else if (key == "p_b") to_double(key, value, cfg.p_b);
      else if (key == "m_family") cfg.m_family = value;
      else if (key == "m_value") to_u64(key, value, cfg.m_value);
      else if (key == "m_atoms") to_atoms<std::uint64_t>(key, value, cfg.m_atoms);
      else if (key == "m_rate") to_double(key, value, cfg.m_rate);
      else if (key == "m_lambda") to_double(key, value, cfg.m_lambda);
      else if (key == "offspring") cfg.offspring = value;
    } else if (section == "classify") {
      if (key == "epsilon") to_double(key, value, cfg.epsilon);
      else if (key == "delta_grid")
        to_list<double>(key, value, cfg.delta_grid,
                        [this](const std::string& f, const std::string& v, double& x) {
                          return to_double(f, v, x);
                        });
      else if (key == "band_lo") to_double(key, value, cfg.band_lo);
      else if (key == "band_hi") to_double(key, value, cfg.band_hi);
      else if (key == "significance") to_double(key, value, cfg.significance);
      else if (key == "checkpoints")
        to_list<std::size_t>(key, value, cfg.checkpoints,
                             [this](const std::string& f, const std::string& v, std::size_t& x) {
                               std::uint64_t u;
                               if (!to_u64(f, v, u)) return false;
                               x = u;
                               return true;
                             });
    } else if (section == "walk") {
      if (key == "coupling") to_bool(key, value, cfg.coupling);
    }
  }
};

void validate_semantics(const ExperimentConfig& cfg, std::vector<ParseIssue>& issues) {
  auto bad = [&issues](const std::string& field, const std::string& msg) {
    issues.push_back({0, field, msg});
  };
  if (std::find(kKinds.begin(), kKinds.end(), cfg.kind) == kKinds.end()) {
    bad("kind", "unknown experiment kind '" + cfg.kind + "'");
  }
  if (cfg.format != "csv" && cfg.format != "json") bad("format", "format must be csv or json");
  if (cfg.mode != "zero-start" && cfg.mode != "one-ancestor") {
    bad("mode", "mode must be zero-start or one-ancestor");
  }
  if (cfg.workers == 0) bad("workers", "workers must be >= 1");
  if (cfg.sample_every == 0) bad("sample_every", "sample_every must be >= 1");
  if (cfg.horizons.empty()) bad("horizon", "at least one horizon is required");
  if (cfg.exact_threshold > env::kDefaultExactThreshold) {
    bad("exact_threshold", "exact_threshold cannot exceed 2^62");
  }

  if (cfg.p_family == "two-point") {
    if (!(cfg.p_a > 0.0 && cfg.p_a < 1.0)) bad("p_a", "two-point atom must lie in (0,1)");
    if (!(cfg.p_w >= 0.0 && cfg.p_w <= 1.0)) bad("p_w", "weight must lie in [0,1]");
  } else if (cfg.p_family == "discrete") {
    if (cfg.p_atoms.empty()) bad("p_atoms", "discrete p-law needs atoms");
    double tot = 0.0;
    for (const auto& [p, w] : cfg.p_atoms) {
      if (!(p > 0.0 && p < 1.0)) bad("p_atoms", "atom outside (0,1)");
      if (w < 0.0) bad("p_atoms", "negative weight");
      tot += w;
    }
    if (!cfg.p_atoms.empty() && std::fabs(tot - 1.0) > 1e-9) {
      bad("p_atoms", "weights must sum to 1");
    }
  } else if (cfg.p_family == "logit-uniform") {
    if (!(cfg.p_b > 0.0)) bad("p_b", "half width must be positive");
  } else if (cfg.p_family == "constant") {
    if (!(cfg.p_value > 0.0 && cfg.p_value < 1.0)) bad("p_value", "constant p must lie in (0,1)");
  } else {
    bad("p_family", "unknown p-law family '" + cfg.p_family + "'");
  }

  if (cfg.m_family == "heavy-tail") {
    if (!(cfg.m_lambda > 0.0)) bad("m_lambda", "heavy-tail exponent lambda must be positive");
  } else if (cfg.m_family == "poisson") {
    if (!(cfg.m_rate >= 0.0)) bad("m_rate", "poisson mean must be nonnegative");
  } else if (cfg.m_family == "finite") {
    if (cfg.m_atoms.empty()) bad("m_atoms", "finite m-law needs atoms");
    double tot = 0.0;
    for (const auto& [m, w] : cfg.m_atoms) {
      (void)m;
      if (w < 0.0) bad("m_atoms", "negative weight");
      tot += w;
    }
    if (!cfg.m_atoms.empty() && std::fabs(tot - 1.0) > 1e-9) {
      bad("m_atoms", "weights must sum to 1");
    }
  } else if (cfg.m_family != "constant") {
    bad("m_family", "unknown m-law family '" + cfg.m_family + "'");
  }

  if (cfg.offspring != "geometric" && cfg.offspring != "bernoulli") {
    bad("offspring", "offspring must be geometric or bernoulli");
  }
}

ParseResult parse_json(const std::string& text) {
  ParseResult out;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    out.issues.push_back({0, "", std::string("JSON parse error: ") + e.what()});
    return out;
  }
  ExperimentConfig cfg;
  Assigner as{cfg, out.issues, 0};
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) {
      out.issues.push_back({0, section, "section body must be an object"});
      continue;
    }
    for (const auto& [key, val] : body.items()) {
      std::string v;
      if (val.is_string()) {
        v = val.get<std::string>();
      } else if (val.is_boolean()) {
        v = val.get<bool>() ? "true" : "false";
      } else if (val.is_number_integer()) {
        v = std::to_string(val.get<long long>());
      } else if (val.is_number_unsigned()) {
        v = std::to_string(val.get<unsigned long long>());
      } else if (val.is_number_float()) {
        std::ostringstream os;
        os.precision(17);
        os << val.get<double>();
        v = os.str();
      } else if (val.is_array()) {
        std::ostringstream os;
        bool first = true;
        for (const auto& item : val) {
          if (!first) os << ",";
          first = false;
          if (item.is_string()) os << item.get<std::string>();
          else os << item.dump();
        }
        v = os.str();
      } else {
        out.issues.push_back({0, key, "unsupported JSON value type"});
        continue;
      }
      as.assign(section, key, v);
    }
  }
  if (out.issues.empty()) validate_semantics(cfg, out.issues);
  if (out.issues.empty()) out.config = cfg;
  return out;
}

}  // namespace

env::EnvironmentSpec ExperimentConfig::env_spec() const {
  env::EnvironmentSpec spec;
  if (p_family == "two-point") {
    spec.p_law = env::TwoPointP{p_a, p_w};
  } else if (p_family == "discrete") {
    spec.p_law = env::DiscreteP{p_atoms};
  } else if (p_family == "logit-uniform") {
    spec.p_law = env::LogitUniformP{p_b};
  } else {  // constant
    spec.p_law = env::DiscreteP{{{p_value, 1.0}}};
  }
  if (m_family == "constant") {
    spec.m_law = env::ConstantM{m_value};
  } else if (m_family == "finite") {
    spec.m_law = env::FiniteM{m_atoms};
  } else if (m_family == "poisson") {
    spec.m_law = env::PoissonM{m_rate};
  } else {
    spec.m_law = env::HeavyTailM{m_lambda};
  }
  spec.offspring = offspring == "bernoulli" ? env::OffspringFamily::Bernoulli
                                            : env::OffspringFamily::Geometric;
  spec.exact_threshold = exact_threshold;
  spec.classical_mode = classical_mode;
  return spec;
}

branching::StartMode ExperimentConfig::start_mode() const {
  return mode == "one-ancestor" ? branching::StartMode::OneAncestor
                                : branching::StartMode::ZeroStart;
}

nlohmann::ordered_json ExperimentConfig::echo() const {
  nlohmann::ordered_json j;
  j["experiment"] = {{"kind", kind},
                     {"seed", seed},
                     {"replicas", replicas},
                     {"horizons", horizons},
                     {"workers", workers},
                     {"out_dir", out_dir},
                     {"format", format},
                     {"mode", mode},
                     {"exact_threshold", exact_threshold},
                     {"classical_mode", classical_mode},
                     {"sample_every", sample_every}};
  nlohmann::ordered_json e;
  e["p_family"] = p_family;
  if (p_family == "two-point") {
    e["p_a"] = p_a;
    e["p_w"] = p_w;
  } else if (p_family == "discrete") {
    e["p_atoms"] = p_atoms;
  } else if (p_family == "logit-uniform") {
    e["p_b"] = p_b;
  } else {
    e["p_value"] = p_value;
  }
  e["m_family"] = m_family;
  if (m_family == "constant") e["m_value"] = m_value;
  if (m_family == "finite") e["m_atoms"] = m_atoms;
  if (m_family == "poisson") e["m_rate"] = m_rate;
  if (m_family == "heavy-tail") e["m_lambda"] = m_lambda;
  e["offspring"] = offspring;
  j["env"] = std::move(e);
  j["classify"] = {{"epsilon", epsilon},       {"delta_grid", delta_grid},
                   {"band_lo", band_lo},       {"band_hi", band_hi},
                   {"significance", significance}, {"checkpoints", checkpoints}};
  j["walk"] = {{"coupling", coupling}};
  return j;
}

ParseResult parse_config(const std::string& text) {
  // JSON configs start with '{'
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    if (ch == '{') return parse_json(text);
    break;
  }

  ParseResult out;
  ExperimentConfig cfg;
  Assigner as{cfg, out.issues, 0};
  std::string section = "experiment";
  std::istringstream ss(text);
  std::string raw;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    as.line = line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        out.issues.push_back({line, "", "malformed section header '" + s + "'"});
        continue;
      }
      section = trim(s.substr(1, s.size() - 2));
      if (kSchema.find(section) == kSchema.end()) {
        out.issues.push_back({line, section, "unknown section [" + section + "]"});
      }
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos) {
      out.issues.push_back({line, "", "expected key = value, got '" + s + "'"});
      continue;
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (kSchema.find(section) == kSchema.end()) continue;  // already reported
    as.assign(section, key, value);
  }
  if (out.issues.empty()) validate_semantics(cfg, out.issues);
  if (out.issues.empty()) out.config = cfg;
  return out;
}

ParseResult parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ParseResult out;
    out.issues.push_back({0, "", "cannot open config file '" + path + "'"});
    return out;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace bpire::config
