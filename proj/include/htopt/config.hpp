#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "htopt/noise.hpp"
#include "htopt/numeric.hpp"
#include "htopt/optim.hpp"
#include "htopt/problems.hpp"

namespace htopt {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProblemConfig {
  std::string kind;  // quadratic | linear-perturbation | random-quadratic
  std::vector<double> eigenvalues;       // quadratic, linear-perturbation
  std::vector<double> mean_eigenvalues;  // random-quadratic
  double eigen_spread = 0.0;             // random-quadratic
  std::vector<double> center;            // optional, defaults to the origin
  std::vector<double> x1;
  std::string id;  // optional, defaults to kind
};

struct NoiseConfig {
  std::string family = "zero";  // zero | gaussian | pareto
  double p = 2.0;
  double alpha = 0.0;   // pareto tail index
  double scale = 0.0;   // pareto x_m
  double stddev = 0.0;  // gaussian
};

struct SweepPlanConfig {
  std::vector<Algorithm> algorithms;
  std::vector<long> t_grid;
  int seeds = 1;
  std::vector<std::uint64_t> seed_list;  // optional explicit seeds
  double delta = 0.1;
  std::string params = "auto";  // auto | theorem1 | theorem2 | explicit
  bool halve_delta = false;
  std::optional<double> beta, clip, eta;  // explicit source only
  bool diagnostics = false;
};

struct OutputConfig {
  std::string dir = "out";
};

struct SweepConfig {
  ProblemConfig problem;
  NoiseConfig noise;
  SweepPlanConfig sweep;
  OutputConfig output;
};

inline Algorithm parse_algorithm(const std::string& token) {
  if (token == "alg1" || token == "momentum") return Algorithm::momentum;
  if (token == "alg2" || token == "variance-reduced") return Algorithm::variance_reduced;
  if (token == "clipped-sgd") return Algorithm::clipped_sgd;
  throw ConfigError("sweep.algorithms: unknown algorithm '" + token +
                    "' (expected alg1 | alg2 | clipped-sgd)");
}

namespace detail {

// Both encodings funnel into this flat section/key/value form before any
// interpretation, so strictness and defaults behave identically for the
// key/value text format and for JSON.
using FlatConfig = std::map<std::string, std::vector<std::pair<std::string, std::string>>>;

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline FlatConfig flatten_text(const std::string& text) {
  FlatConfig flat;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      flat[section];
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' appears before any [section]");
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    flat[section].emplace_back(key, value);
  }
  return flat;
}

inline std::string json_scalar_to_string(const nlohmann::json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) return format_double(v.get<double>());
  throw ConfigError(where + ": unsupported value type");
}

inline FlatConfig flatten_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: JSON parse failure: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object of sections");
  FlatConfig flat;
  for (auto& [section, body] : j.items()) {
    if (!body.is_object())
      throw ConfigError("config: section '" + section + "' must be an object");
    flat[section];
    for (auto& [key, value] : body.items()) {
      std::string where = section + "." + key;
      if (value.is_array()) {
        std::string joined;
        for (const auto& item : value) {
          if (!joined.empty()) joined += ",";
          joined += json_scalar_to_string(item, where);
        }
        flat[section].emplace_back(key, joined);
      } else {
        flat[section].emplace_back(key, json_scalar_to_string(value, where));
      }
    }
  }
  return flat;
}

inline double to_double(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ConfigError(where + ": cannot parse '" + v + "' as a number");
  }
}

inline long to_long(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return n;
  } catch (...) {
    throw ConfigError(where + ": cannot parse '" + v + "' as an integer");
  }
}

inline std::uint64_t to_u64(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return static_cast<std::uint64_t>(n);
  } catch (...) {
    throw ConfigError(where + ": cannot parse '" + v + "' as an unsigned integer");
  }
}

inline bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(where + ": cannot parse '" + v + "' as a boolean");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline std::vector<double> to_double_list(const std::string& v, const std::string& where) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(item, where));
  return out;
}

}  // namespace detail

/// Parses either encoding of the sweep schema. Unknown sections and keys
/// are rejected by name; values are validated against the module
/// invariants they feed. Text beginning with '{' is treated as JSON.
inline SweepConfig parse_config_text(const std::string& text) {
  std::string lead = detail::trim(text);
  detail::FlatConfig flat = (!lead.empty() && lead.front() == '{')
                                ? detail::flatten_json(text)
                                : detail::flatten_text(text);

  SweepConfig cfg;
  bool saw_seed_count = false;
  for (const auto& [section, entries] : flat) {
    if (section == "problem") {
      for (const auto& [key, value] : entries) {
        const std::string where = "problem." + key;
        if (key == "kind") cfg.problem.kind = value;
        else if (key == "eigenvalues") cfg.problem.eigenvalues = detail::to_double_list(value, where);
        else if (key == "mean_eigenvalues")
          cfg.problem.mean_eigenvalues = detail::to_double_list(value, where);
        else if (key == "eigen_spread") cfg.problem.eigen_spread = detail::to_double(value, where);
        else if (key == "center") cfg.problem.center = detail::to_double_list(value, where);
        else if (key == "x1") cfg.problem.x1 = detail::to_double_list(value, where);
        else if (key == "id") cfg.problem.id = value;
        else throw ConfigError("unknown key '" + key + "' in [problem]");
      }
    } else if (section == "noise") {
      for (const auto& [key, value] : entries) {
        const std::string where = "noise." + key;
        if (key == "family") cfg.noise.family = value;
        else if (key == "p") cfg.noise.p = detail::to_double(value, where);
        else if (key == "alpha") cfg.noise.alpha = detail::to_double(value, where);
        else if (key == "scale") cfg.noise.scale = detail::to_double(value, where);
        else if (key == "stddev") cfg.noise.stddev = detail::to_double(value, where);
        else throw ConfigError("unknown key '" + key + "' in [noise]");
      }
    } else if (section == "sweep") {
      for (const auto& [key, value] : entries) {
        const std::string where = "sweep." + key;
        if (key == "algorithms") {
          for (const auto& token : detail::split_list(value))
            cfg.sweep.algorithms.push_back(parse_algorithm(token));
        } else if (key == "t_grid") {
          for (const auto& item : detail::split_list(value))
            cfg.sweep.t_grid.push_back(detail::to_long(item, where));
        } else if (key == "seeds") {
          cfg.sweep.seeds = static_cast<int>(detail::to_long(value, where));
          saw_seed_count = true;
        } else if (key == "seed_list") {
          for (const auto& item : detail::split_list(value))
            cfg.sweep.seed_list.push_back(detail::to_u64(item, where));
        } else if (key == "delta") cfg.sweep.delta = detail::to_double(value, where);
        else if (key == "params") cfg.sweep.params = value;
        else if (key == "halve_delta") cfg.sweep.halve_delta = detail::to_bool(value, where);
        else if (key == "beta") cfg.sweep.beta = detail::to_double(value, where);
        else if (key == "clip") cfg.sweep.clip = detail::to_double(value, where);
        else if (key == "eta") cfg.sweep.eta = detail::to_double(value, where);
        else if (key == "diagnostics") cfg.sweep.diagnostics = detail::to_bool(value, where);
        else throw ConfigError("unknown key '" + key + "' in [sweep]");
      }
    } else if (section == "output") {
      for (const auto& [key, value] : entries) {
        if (key == "dir") cfg.output.dir = value;
        else throw ConfigError("unknown key '" + key + "' in [output]");
      }
    } else {
      throw ConfigError("unknown section '" + section + "'");
    }
  }

  // Value validation. Every message names the offending key.
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };

  const auto& P = cfg.problem;
  require(!P.kind.empty(), "problem.kind is missing (quadratic | linear-perturbation | random-quadratic)");
  require(P.kind == "quadratic" || P.kind == "linear-perturbation" ||
              P.kind == "random-quadratic",
          "problem.kind: unknown kind '" + P.kind + "'");
  require(!P.x1.empty(), "problem.x1 is missing");
  if (P.kind == "random-quadratic") {
    require(!P.mean_eigenvalues.empty(), "problem.mean_eigenvalues is missing for random-quadratic");
    require(P.eigenvalues.empty(), "problem.eigenvalues does not apply to random-quadratic "
                                   "(use problem.mean_eigenvalues)");
    require(P.center.empty(), "problem.center does not apply to random-quadratic");
    require(P.eigen_spread >= 0.0, "problem.eigen_spread must be nonnegative");
  } else {
    require(!P.eigenvalues.empty(), "problem.eigenvalues is missing");
    require(P.mean_eigenvalues.empty() && P.eigen_spread == 0.0,
            "problem.mean_eigenvalues/eigen_spread apply only to random-quadratic");
  }

  const auto& N = cfg.noise;
  require(N.family == "zero" || N.family == "gaussian" || N.family == "pareto",
          "noise.family: unknown family '" + N.family + "' (zero | gaussian | pareto)");
  require(N.p > 1.0 && N.p <= 2.0, "noise.p must lie in (1, 2]");
  if (N.family == "pareto") {
    require(N.scale > 0.0, "noise.scale (pareto x_m) must be positive");
    require(N.alpha > N.p, "noise.alpha must exceed noise.p, otherwise the p-th moment is undefined");
  }
  if (N.family == "gaussian") require(N.stddev >= 0.0, "noise.stddev must be nonnegative");

  auto& S = cfg.sweep;
  require(!S.algorithms.empty(), "sweep.algorithms is missing");
  require(!S.t_grid.empty(), "sweep.t_grid is missing");
  for (size_t i = 0; i < S.t_grid.size(); ++i) {
    require(S.t_grid[i] >= 1, "sweep.t_grid entries must be at least 1");
    if (i > 0)
      require(S.t_grid[i] > S.t_grid[i - 1], "sweep.t_grid must be strictly increasing");
  }
  if (!S.seed_list.empty()) {
    require(!saw_seed_count, "sweep.seeds and sweep.seed_list are mutually exclusive");
    S.seeds = static_cast<int>(S.seed_list.size());
  }
  require(S.seeds >= 1, "sweep.seeds must be at least 1");
  require(S.delta > 0.0 && S.delta < 1.0, "sweep.delta must lie in (0, 1)");
  require(S.params == "auto" || S.params == "theorem1" || S.params == "theorem2" ||
              S.params == "explicit",
          "sweep.params: unknown source '" + S.params +
              "' (auto | theorem1 | theorem2 | explicit)");
  if (S.params == "explicit") {
    require(S.beta.has_value(), "sweep.beta is missing (required when sweep.params = explicit)");
    require(S.clip.has_value(), "sweep.clip is missing (required when sweep.params = explicit)");
    require(S.eta.has_value(), "sweep.eta is missing (required when sweep.params = explicit)");
    require(*S.beta >= 0.0 && *S.beta < 1.0, "sweep.beta must lie in [0, 1)");
    require(*S.clip > 0.0, "sweep.clip must be positive");
    require(*S.eta > 0.0, "sweep.eta must be positive");
  } else {
    require(!S.beta && !S.clip && !S.eta,
            "sweep.beta/clip/eta apply only when sweep.params = explicit");
  }
  for (Algorithm a : S.algorithms) {
    if (a == Algorithm::variance_reduced)
      require(P.kind != "quadratic",
              "sweep.algorithms: alg2 needs a component problem "
              "(problem.kind = linear-perturbation | random-quadratic)");
  }
  require(!cfg.output.dir.empty(), "output.dir must be nonempty");
  return cfg;
}

inline SweepConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// Builds the problem instance a config describes. The noise section is
/// the gradient-noise model for quadratic and linear-perturbation kinds
/// and the intercept noise for random-quadratic.
inline ProblemInstance build_instance(const SweepConfig& cfg) {
  const auto& P = cfg.problem;
  const auto& N = cfg.noise;
  const int dim = static_cast<int>(P.x1.size());

  NoiseModel noise;
  if (N.family == "zero") noise = make_zero_noise(dim, N.p);
  else if (N.family == "gaussian") noise = make_gaussian_noise(dim, N.stddev, N.p);
  else noise = make_pareto_noise(dim, N.alpha, N.scale, N.p);

  Eigen::VectorXd x1 = Eigen::Map<const Eigen::VectorXd>(P.x1.data(), dim);
  std::string id = P.id.empty() ? P.kind : P.id;

  if (P.kind == "random-quadratic") {
    if (static_cast<int>(P.mean_eigenvalues.size()) != dim)
      throw ConfigError("problem.mean_eigenvalues and problem.x1 differ in dimension");
    Eigen::VectorXd lam =
        Eigen::Map<const Eigen::VectorXd>(P.mean_eigenvalues.data(), dim);
    return ProblemInstance::component(
        make_random_quadratic(lam, P.eigen_spread, noise), x1, id);
  }

  if (static_cast<int>(P.eigenvalues.size()) != dim)
    throw ConfigError("problem.eigenvalues and problem.x1 differ in dimension");
  Eigen::VectorXd lam = Eigen::Map<const Eigen::VectorXd>(P.eigenvalues.data(), dim);
  Eigen::VectorXd center = Eigen::VectorXd::Zero(dim);
  if (!P.center.empty()) {
    if (static_cast<int>(P.center.size()) != dim)
      throw ConfigError("problem.center and problem.x1 differ in dimension");
    center = Eigen::Map<const Eigen::VectorXd>(P.center.data(), dim);
  }
  Objective obj = make_quadratic(lam, center);

  if (P.kind == "quadratic") return ProblemInstance::additive(obj, noise, x1, id);
  return ProblemInstance::component(make_linear_perturbation(obj, noise), x1, id);
}

inline NoiseModel build_noise(const SweepConfig& cfg) {
  const int dim = static_cast<int>(cfg.problem.x1.size());
  const auto& N = cfg.noise;
  if (N.family == "zero") return make_zero_noise(dim, N.p);
  if (N.family == "gaussian") return make_gaussian_noise(dim, N.stddev, N.p);
  return make_pareto_noise(dim, N.alpha, N.scale, N.p);
}

}  // namespace htopt
