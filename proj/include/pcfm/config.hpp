#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcfm/dgp.hpp"
#include "pcfm/montecarlo.hpp"

namespace pcfm {

using json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error("config error at " + path + ": " + what) {}
};

namespace detail {

inline const json& require_key(const json& j, const std::string& parent, const std::string& key) {
  if (!j.is_object()) throw ConfigError(parent.empty() ? "/" : parent, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(parent + "/" + key, "missing");
  return *it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

inline Vector as_vector(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array");
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    v(i) = as_number(j[i], path + "/" + std::to_string(i));
  return v;
}

}  // namespace detail

inline DgpKind parse_dgp_kind(const std::string& s, const std::string& path) {
  if (s == "dgp1") return DgpKind::dgp1;
  if (s == "dgp2") return DgpKind::dgp2;
  if (s == "dgp1_nonorth") return DgpKind::dgp1_nonorth;
  throw ConfigError(path, "unknown dgp kind '" + s + "' (expected dgp1, dgp2, dgp1_nonorth)");
}

inline RotationKind parse_rotation_kind(const std::string& s, const std::string& path) {
  if (s == "H0") return RotationKind::H0;
  if (s == "H1") return RotationKind::H1;
  if (s == "H2") return RotationKind::H2;
  if (s == "H3") return RotationKind::H3;
  if (s == "H4") return RotationKind::H4;
  if (s == "Hbar") return RotationKind::Hbar;
  throw ConfigError(path, "unknown rotation kind '" + s + "'");
}

inline SigmaRule parse_sigma_rule(const json& j, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "match_common_sd") return SigmaRule::match_common_sd();
    throw ConfigError(path, "unknown sigma rule '" + j.get<std::string>() + "'");
  }
  if (j.is_object() && j.contains("constant"))
    return SigmaRule::constant(detail::as_number(j["constant"], path + "/constant"));
  throw ConfigError(path, "expected \"match_common_sd\" or {\"constant\": s}");
}

inline DgpSpec parse_dgp_spec(const json& j, const std::string& path) {
  DgpSpec spec;
  const json& kind = detail::require_key(j, path, "kind");
  if (!kind.is_string()) throw ConfigError(path + "/kind", "expected a string");
  spec.kind = parse_dgp_kind(kind.get<std::string>(), path + "/kind");
  spec.r = detail::as_int(detail::require_key(j, path, "r"), path + "/r");
  spec.alphas = detail::as_vector(detail::require_key(j, path, "alphas"), path + "/alphas");
  spec.d2 = detail::as_vector(detail::require_key(j, path, "d2"), path + "/d2");
  if (j.contains("sigma_rule")) spec.sigma_rule = parse_sigma_rule(j["sigma_rule"], path + "/sigma_rule");
  if (j.contains("n")) spec.n = detail::as_int(j["n"], path + "/n");
  if (j.contains("t")) spec.t = detail::as_int(j["t"], path + "/t");
  return spec;
}

inline McConfig parse_mc_config(const json& j) {
  McConfig cfg;
  cfg.dgp = parse_dgp_spec(detail::require_key(j, "", "dgp"), "/dgp");

  const json& grid = detail::require_key(j, "", "grid");
  if (!grid.is_array() || grid.empty()) throw ConfigError("/grid", "expected a non-empty array");
  for (size_t i = 0; i < grid.size(); ++i) {
    const std::string p = "/grid/" + std::to_string(i);
    if (!grid[i].is_array() || grid[i].size() != 2)
      throw ConfigError(p, "expected a [n, t] pair");
    cfg.grid.emplace_back(detail::as_int(grid[i][0], p + "/0"), detail::as_int(grid[i][1], p + "/1"));
  }

  cfg.replications = detail::as_int(detail::require_key(j, "", "replications"), "/replications");
  if (cfg.replications < 1) throw ConfigError("/replications", "must be >= 1");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer()) throw ConfigError("/seed", "expected an integer");
    cfg.base_seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("diagnostics")) {
    const json& d = j["diagnostics"];
    if (!d.is_array()) throw ConfigError("/diagnostics", "expected an array of strings");
    for (size_t i = 0; i < d.size(); ++i) {
      if (!d[i].is_string())
        throw ConfigError("/diagnostics/" + std::to_string(i), "expected a string");
      const std::string s = d[i].get<std::string>();
      if (s == "coverage") cfg.want_coverage = true;
      else if (s == "histograms") cfg.want_histograms = true;
      else if (s == "fit" || s == "errors") { /* always computed */ }
      else throw ConfigError("/diagnostics/" + std::to_string(i), "unknown diagnostic '" + s + "'");
    }
  }
  if (j.contains("rotation_kind")) {
    if (!j["rotation_kind"].is_string()) throw ConfigError("/rotation_kind", "expected a string");
    cfg.factor_rotation = parse_rotation_kind(j["rotation_kind"].get<std::string>(), "/rotation_kind");
  }
  if (j.contains("coverage_t")) cfg.coverage_t = detail::as_int(j["coverage_t"], "/coverage_t");
  if (j.contains("coverage_i")) cfg.coverage_i = detail::as_int(j["coverage_i"], "/coverage_i");
  if (j.contains("hist_t")) cfg.hist_t = detail::as_int(j["hist_t"], "/hist_t");
  if (j.contains("hist_i")) cfg.hist_i = detail::as_int(j["hist_i"], "/hist_i");
  if (j.contains("threads")) cfg.threads = detail::as_int(j["threads"], "/threads");
  return cfg;
}

inline json to_json(const SigmaRule& rule) {
  if (rule.kind == SigmaRule::Kind::match_common_sd) return json("match_common_sd");
  return json{{"constant", rule.value}};
}

inline json to_json(const DgpSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  j["r"] = spec.r;
  j["alphas"] = std::vector<double>(spec.alphas.data(), spec.alphas.data() + spec.alphas.size());
  j["d2"] = std::vector<double>(spec.d2.data(), spec.d2.data() + spec.d2.size());
  j["sigma_rule"] = to_json(spec.sigma_rule);
  return j;
}

inline json to_json(const McReport& report) {
  json j;
  j["dgp"] = to_json(report.config.dgp);
  j["replications"] = report.config.replications;
  j["seed"] = report.config.base_seed;
  j["points"] = json::array();
  for (const auto& p : report.points) {
    json q;
    q["n"] = p.n;
    q["t"] = p.t;
    q["reps"] = p.reps;
    q["failed"] = p.failed;
    q["r2_f"] = std::vector<double>(p.r2_f.data(), p.r2_f.data() + p.r2_f.size());
    q["r2_l"] = std::vector<double>(p.r2_l.data(), p.r2_l.data() + p.r2_l.size());
    q["m_f"] = p.m_f;
    q["m_l"] = p.m_l;
    q["rho_bar"] = p.rho_bar;
    q["rbar2"] = p.rbar2;
    q["err_factor_mean"] = p.mean_err.factor;
    q["err_loading_mean"] = p.mean_err.loading;
    q["err_common_mean"] = p.mean_err.common;
    q["err_factor_median"] = p.median_err.factor;
    q["err_loading_median"] = p.median_err.loading;
    q["err_common_median"] = p.median_err.common;
    if (report.config.want_coverage) {
      q["coverage_factor"] =
          std::vector<double>(p.cov_factor.data(), p.cov_factor.data() + p.cov_factor.size());
      q["coverage_loading"] =
          std::vector<double>(p.cov_loading.data(), p.cov_loading.data() + p.cov_loading.size());
      q["coverage_common"] = p.cov_common;
      q["mean_se_factor"] = std::vector<double>(p.mean_se_factor.data(),
                                                p.mean_se_factor.data() + p.mean_se_factor.size());
      q["mean_se_loading"] = std::vector<double>(
          p.mean_se_loading.data(), p.mean_se_loading.data() + p.mean_se_loading.size());
      q["mean_se_common"] = p.mean_se_common;
    }
    j["points"].push_back(std::move(q));
  }
  return j;
}

}  // namespace pcfm
