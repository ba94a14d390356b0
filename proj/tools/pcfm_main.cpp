// Command-line surface for panel factor estimation and the simulation lab.
//
// Subcommands:
//   estimate   PC fit of a CSV panel -> factors/loadings/common/eigenvalues
//   simulate   Monte Carlo experiment -> table.csv, report.json, histograms.csv
//   rates      log-log convergence slopes of the mean error functionals
//   coverage   empirical confidence-interval coverage at probe indices
//   favar      two-step factor-augmented regression experiment
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcfm/config.hpp"
#include "pcfm/csv.hpp"
#include "pcfm/favar.hpp"
#include "pcfm/inference.hpp"
#include "pcfm/montecarlo.hpp"
#include "pcfm/pce.hpp"

namespace fs = std::filesystem;
using pcfm::Index;
using pcfm::Matrix;
using pcfm::Vector;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

pcfm::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw std::runtime_error("cannot open config '" + path + "'");
  pcfm::json j;
  try {
    j = pcfm::json::parse(in);
  } catch (const std::exception& e) {
    throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out.is_open()) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

struct OutputSpec {
  fs::path dir = ".";
  bool csv = true;
  bool json = true;
};

// the config's outputs block; an explicit --out-dir wins over outputs.dir
OutputSpec resolve_outputs(const pcfm::json& j, const std::string& cli_out_dir) {
  OutputSpec out;
  if (j.contains("outputs")) {
    const pcfm::json& o = j["outputs"];
    if (!o.is_object()) throw pcfm::ConfigError("/outputs", "expected an object");
    if (o.contains("dir")) {
      if (!o["dir"].is_string()) throw pcfm::ConfigError("/outputs/dir", "expected a string");
      out.dir = o["dir"].get<std::string>();
    }
    if (o.contains("formats")) {
      if (!o["formats"].is_array()) throw pcfm::ConfigError("/outputs/formats", "expected an array");
      out.csv = out.json = false;
      for (size_t i = 0; i < o["formats"].size(); ++i) {
        const std::string p = "/outputs/formats/" + std::to_string(i);
        if (!o["formats"][i].is_string()) throw pcfm::ConfigError(p, "expected a string");
        const std::string f = o["formats"][i].get<std::string>();
        if (f == "csv") out.csv = true;
        else if (f == "json") out.json = true;
        else throw pcfm::ConfigError(p, "unknown format '" + f + "' (expected csv or json)");
      }
    }
  }
  if (!cli_out_dir.empty()) out.dir = cli_out_dir;
  return out;
}

// ---------------------------------------------------------------------------

int cmd_estimate(const std::string& input, int rank, bool standardize, bool with_se,
                 const std::string& out_dir) {
  const pcfm::CsvTable table = pcfm::read_csv(input);
  pcfm::Panel panel = pcfm::make_panel(table.values);
  if (rank < 1 || rank > std::min(panel.n_periods(), panel.n_series()))
    throw UsageError("rank " + std::to_string(rank) + " out of range for " +
                     std::to_string(panel.n_periods()) + "x" +
                     std::to_string(panel.n_series()) + " panel");
  if (standardize) panel = pcfm::standardize_panel(panel);

  const pcfm::FactorFit fit = pcfm::pc_estimate(panel, rank);
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  pcfm::write_csv((dir / "factors.csv").string(), pcfm::numbered_header("F", rank), fit.factors);
  pcfm::write_csv((dir / "loadings.csv").string(), pcfm::numbered_header("L", rank), fit.loadings);
  pcfm::write_csv((dir / "common.csv").string(), table.header,
                  fit.factors * fit.loadings.transpose());
  pcfm::write_csv((dir / "residuals.csv").string(), table.header, fit.residuals);
  pcfm::write_csv((dir / "eigenvalues.csv").string(), {"eig"}, Matrix(fit.eig));
  if (standardize) {
    Matrix ms(panel.series_means.size(), 2);
    ms.col(0) = panel.series_means;
    ms.col(1) = panel.series_sds;
    pcfm::write_csv((dir / "standardization.csv").string(), {"mean", "sd"}, ms);
  }
  if (with_se) {
    const Index t = fit.n_periods();
    const Index n = fit.n_series();
    std::vector<Matrix> vf(t), vl(n);
    Matrix se_f(t, rank), se_l(n, rank), se_c(t, n);
    for (Index s = 0; s < t; ++s) {
      vf[s] = pcfm::var_factor(fit, static_cast<int>(s)).value;
      se_f.row(s) = vf[s].diagonal().cwiseSqrt().transpose();
    }
    for (Index i = 0; i < n; ++i) {
      vl[i] = pcfm::var_loading(fit, static_cast<int>(i)).value;
      se_l.row(i) = vl[i].diagonal().cwiseSqrt().transpose();
    }
    for (Index s = 0; s < t; ++s)
      for (Index i = 0; i < n; ++i)
        se_c(s, i) =
            std::sqrt((fit.loadings.row(i) * vf[s] * fit.loadings.row(i).transpose()).value() +
                      (fit.factors.row(s) * vl[i] * fit.factors.row(s).transpose()).value());
    pcfm::write_csv((dir / "factors_se.csv").string(), pcfm::numbered_header("F", rank), se_f);
    pcfm::write_csv((dir / "loadings_se.csv").string(), pcfm::numbered_header("L", rank), se_l);
    pcfm::write_csv((dir / "common_se.csv").string(), table.header, se_c);
  }
  std::cout << "estimated " << rank << " factors from " << panel.n_periods() << "x"
            << panel.n_series() << " panel -> " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

std::string table_csv(const pcfm::McReport& report) {
  const int r = report.config.dgp.r;
  std::string out = "N,T";
  for (int j = 1; j <= r; ++j)
    out += ",R2_F" + std::to_string(j) + ",R2_L" + std::to_string(j);
  out += ",M_F,M_L,rho_bar\n";
  for (const auto& p : report.points) {
    out += std::to_string(p.n) + "," + std::to_string(p.t);
    for (int j = 0; j < r; ++j)
      out += "," + pcfm::format_cell(p.r2_f(j)) + "," + pcfm::format_cell(p.r2_l(j));
    out += "," + pcfm::format_cell(p.m_f) + "," + pcfm::format_cell(p.m_l) + "," +
           pcfm::format_cell(p.rho_bar) + "\n";
  }
  return out;
}

pcfm::McConfig config_for_run(const pcfm::json& j, std::optional<std::uint64_t> seed_override,
                              int threads) {
  pcfm::McConfig cfg = pcfm::parse_mc_config(j);
  if (seed_override) cfg.base_seed = *seed_override;
  if (threads > 0) cfg.threads = threads;
  return cfg;
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                 int threads, const std::string& out_dir) {
  const pcfm::json j = load_config(config_path);
  const OutputSpec outputs = resolve_outputs(j, out_dir);
  const pcfm::McConfig cfg = config_for_run(j, seed_override, threads);
  const pcfm::McReport report = pcfm::run_experiment(cfg);

  const fs::path dir = outputs.dir;
  fs::create_directories(dir);
  if (outputs.csv) write_text(dir / "table.csv", table_csv(report));
  if (outputs.json) write_text(dir / "report.json", pcfm::to_json(report).dump(2) + "\n");

  if (outputs.csv && cfg.want_histograms) {
    const int r = cfg.dgp.r;
    Index rows = 0;
    for (const auto& p : report.points) rows += p.hist_f.rows();
    Matrix hist(rows, 3 + 2 * r);
    Index at = 0;
    for (const auto& p : report.points) {
      for (Index rep = 0; rep < p.hist_f.rows(); ++rep, ++at) {
        hist(at, 0) = p.n;
        hist(at, 1) = p.t;
        hist(at, 2) = static_cast<double>(rep);
        hist.block(at, 3, 1, r) = p.hist_f.row(rep);
        hist.block(at, 3 + r, 1, r) = p.hist_l.row(rep);
      }
    }
    std::vector<std::string> header = {"n", "t", "rep"};
    for (int j = 1; j <= r; ++j) header.push_back("F" + std::to_string(j));
    for (int j = 1; j <= r; ++j) header.push_back("L" + std::to_string(j));
    pcfm::write_csv((dir / "histograms.csv").string(), header, hist);
  }
  std::cout << "simulated " << report.points.size() << " grid point(s) x "
            << cfg.replications << " replications -> " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_rates(const std::string& config_path, std::optional<std::uint64_t> seed_override,
              int threads, double selftest_exponent, const std::string& out_dir) {
  const pcfm::json j = load_config(config_path);
  const OutputSpec outputs = resolve_outputs(j, out_dir);
  const fs::path dir = outputs.dir;
  fs::create_directories(dir);

  if (selftest_exponent > 0.0) {
    // machinery self-test: inject errors c / N^a over the configured grid
    // and confirm the regression recovers -a
    const pcfm::McConfig cfg = config_for_run(j, seed_override, threads);
    std::vector<double> sizes, errs;
    for (const auto& [n, t] : cfg.grid) {
      sizes.push_back(static_cast<double>(n));
      errs.push_back(2.75 / std::pow(static_cast<double>(n), selftest_exponent));
    }
    const pcfm::RateFit fit = pcfm::loglog_slope(sizes, errs);
    std::string out = "functional,slope,se\n";
    out += "selftest," + pcfm::format_cell(fit.slope) + "," + pcfm::format_cell(fit.se) + "\n";
    write_text(dir / "rates.csv", out);
    std::cout << "self-test slope " << fit.slope << " (target " << -selftest_exponent << ")\n";
    return 0;
  }

  const pcfm::McConfig cfg = config_for_run(j, seed_override, threads);
  const pcfm::McReport report = pcfm::run_experiment(cfg);
  const pcfm::RateReport rates = pcfm::rate_slopes(report);

  std::string out = "functional,slope,se\n";
  out += "factor," + pcfm::format_cell(rates.factor.slope) + "," +
         pcfm::format_cell(rates.factor.se) + "\n";
  out += "loading," + pcfm::format_cell(rates.loading.slope) + "," +
         pcfm::format_cell(rates.loading.se) + "\n";
  out += "common," + pcfm::format_cell(rates.common.slope) + "," +
         pcfm::format_cell(rates.common.se) + "\n";
  if (outputs.csv) write_text(dir / "rates.csv", out);
  if (outputs.json) write_text(dir / "report.json", pcfm::to_json(report).dump(2) + "\n");
  std::cout << "slopes: factor " << rates.factor.slope << ", loading " << rates.loading.slope
            << ", common " << rates.common.slope << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_coverage(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                 int threads, const std::string& out_dir) {
  const pcfm::json j = load_config(config_path);
  const OutputSpec outputs = resolve_outputs(j, out_dir);
  pcfm::McConfig cfg = config_for_run(j, seed_override, threads);
  cfg.want_coverage = true;
  const pcfm::McReport report = pcfm::run_experiment(cfg);

  const fs::path dir = outputs.dir;
  fs::create_directories(dir);
  std::string out = "n,t,target,component,coverage,mean_se\n";
  for (const auto& p : report.points) {
    const std::string prefix = std::to_string(p.n) + "," + std::to_string(p.t);
    for (int j = 0; j < cfg.dgp.r; ++j)
      out += prefix + ",factor," + std::to_string(j + 1) + "," +
             pcfm::format_cell(p.cov_factor(j)) + "," + pcfm::format_cell(p.mean_se_factor(j)) +
             "\n";
    for (int j = 0; j < cfg.dgp.r; ++j)
      out += prefix + ",loading," + std::to_string(j + 1) + "," +
             pcfm::format_cell(p.cov_loading(j)) + "," + pcfm::format_cell(p.mean_se_loading(j)) +
             "\n";
    out += prefix + ",common,1," + pcfm::format_cell(p.cov_common) + "," +
           pcfm::format_cell(p.mean_se_common) + "\n";
  }
  if (outputs.csv) write_text(dir / "coverage.csv", out);
  if (outputs.json) write_text(dir / "report.json", pcfm::to_json(report).dump(2) + "\n");
  std::cout << "coverage written for " << report.points.size() << " grid point(s)\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_favar(const std::string& config_path, std::optional<std::uint64_t> seed_override,
              int threads, const std::string& out_dir) {
  const pcfm::json j = load_config(config_path);
  const OutputSpec outputs = resolve_outputs(j, out_dir);
  pcfm::DgpSpec spec = pcfm::parse_dgp_spec(pcfm::detail::require_key(j, "", "dgp"), "/dgp");
  if (spec.n < 2 || spec.t < 2) throw pcfm::ConfigError("/dgp", "favar needs dgp.n and dgp.t");
  const Vector gamma = pcfm::detail::as_vector(pcfm::detail::require_key(j, "", "gamma"), "/gamma");
  const Vector beta = pcfm::detail::as_vector(pcfm::detail::require_key(j, "", "beta"), "/beta");
  const int h = j.contains("h") ? pcfm::detail::as_int(j["h"], "/h") : 1;
  const double noise_sd =
      j.contains("noise_sd") ? pcfm::detail::as_number(j["noise_sd"], "/noise_sd") : 1.0;
  const int reps =
      pcfm::detail::as_int(pcfm::detail::require_key(j, "", "replications"), "/replications");
  if (reps < 1) throw pcfm::ConfigError("/replications", "must be >= 1");
  std::uint64_t seed = 0;
  if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
  if (seed_override) seed = *seed_override;
  (void)threads;  // replication loop is cheap relative to the fits

  const int r = spec.r;
  const int m = static_cast<int>(beta.size());
  Matrix est(reps, r + m), se(reps, r + m), tstat(reps, r + m);
  for (int rep = 0; rep < reps; ++rep) {
    pcfm::DgpSpec s = spec;
    s.seed = pcfm::derive_key(seed, 0xfa, rep);
    const pcfm::FavarSim sim = pcfm::favar_simulate(s, gamma, beta, h, noise_sd);
    const pcfm::FactorFit fit = pcfm::pc_estimate(sim.sim.panel, r);
    const pcfm::FavarFit fv = pcfm::favar_fit(sim.y, sim.w, fit.factors, h);
    est.row(rep) = fv.delta_hat.transpose();
    se.row(rep) = fv.standard_errors().transpose();
    tstat.row(rep) = fv.tstats.transpose();
  }

  const fs::path dir = outputs.dir;
  fs::create_directories(dir);
  std::string out = "coef,true_value,mean_estimate,sd_estimate,mean_se,rej_rate_5pct,ci95_coverage\n";
  const double zc = 1.959963984540054;
  for (int k = 0; k < r + m; ++k) {
    const bool is_beta = k >= r;
    const std::string name = is_beta ? "W" + std::to_string(k - r + 1) : "F" + std::to_string(k + 1);
    const double mean = est.col(k).mean();
    const double sd = std::sqrt((est.col(k).array() - mean).square().sum() /
                                static_cast<double>(reps > 1 ? reps - 1 : 1));
    const double mean_se = se.col(k).mean();
    const double rej =
        (tstat.col(k).array().abs() > zc).cast<double>().sum() / static_cast<double>(reps);
    out += name + ",";
    // factor coefficients estimate a rotation-dependent target; no truth column for them
    out += is_beta ? pcfm::format_cell(beta(k - r)) : std::string("NA");
    out += "," + pcfm::format_cell(mean) + "," + pcfm::format_cell(sd) + "," +
           pcfm::format_cell(mean_se) + "," + pcfm::format_cell(rej) + ",";
    if (is_beta) {
      const double truth = beta(k - r);
      const double cover = ((est.col(k).array() - truth).abs() <= zc * se.col(k).array())
                               .cast<double>()
                               .sum() /
                           static_cast<double>(reps);
      out += pcfm::format_cell(cover);
    } else {
      out += "NA";
    }
    out += "\n";
  }
  write_text(dir / "favar.csv", out);
  std::cout << "favar experiment: " << reps << " replications -> " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"principal-component estimation of approximate factor models"};
  app.require_subcommand(1);

  std::string input, config_path, out_dir;
  int rank = 0;
  bool standardize = false, with_se = false;
  int threads = 0;
  std::optional<std::uint64_t> seed_override;
  std::uint64_t seed_value = 0;
  double selftest_exponent = 0.0;

  auto* est = app.add_subcommand("estimate", "PC fit of a CSV panel");
  est->add_option("--input", input, "input CSV, rows = time, first row header")->required();
  est->add_option("--rank,-r", rank, "number of factors")->required();
  est->add_flag("--standardize", standardize, "standardize each series to mean 0, sd 1");
  est->add_flag("--with-se", with_se, "also write standard-error files");
  est->add_option("--out-dir", out_dir, "output directory");

  auto add_run_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON experiment config")->required();
    cmd->add_option("--out-dir", out_dir, "output directory");
    cmd->add_option("--threads", threads, "worker thread cap (0 = hardware)");
    cmd->add_option("--seed", seed_value, "override the config seed")
        ->each([&](const std::string& s) { seed_override = std::stoull(s); });
  };
  auto* sim = app.add_subcommand("simulate", "Monte Carlo experiment over an (N,T) grid");
  add_run_opts(sim);
  auto* rates = app.add_subcommand("rates", "convergence-rate slopes over the grid");
  add_run_opts(rates);
  rates->add_option("--self-test-exponent", selftest_exponent,
                    "skip simulation; inject errors c/N^a and recover the slope");
  auto* cov = app.add_subcommand("coverage", "confidence-interval coverage at probe indices");
  add_run_opts(cov);
  auto* fav = app.add_subcommand("favar", "factor-augmented regression experiment");
  add_run_opts(fav);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (est->parsed())
      return cmd_estimate(input, rank, standardize, with_se, out_dir.empty() ? "." : out_dir);
    if (sim->parsed()) return cmd_simulate(config_path, seed_override, threads, out_dir);
    if (rates->parsed())
      return cmd_rates(config_path, seed_override, threads, selftest_exponent, out_dir);
    if (cov->parsed()) return cmd_coverage(config_path, seed_override, threads, out_dir);
    if (fav->parsed()) return cmd_favar(config_path, seed_override, threads, out_dir);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const pcfm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
