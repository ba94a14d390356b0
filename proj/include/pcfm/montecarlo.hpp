#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pcfm/dgp.hpp"
#include "pcfm/inference.hpp"
#include "pcfm/model.hpp"
#include "pcfm/pce.hpp"

namespace pcfm {

// ---------------------------------------------------------------------------
// fit diagnostics
// ---------------------------------------------------------------------------

namespace detail {

// No-intercept least squares of each column of `est` on all columns of
// `truth`; returns per-column R^2 and, optionally, the residual matrix.
inline Vector column_regression_r2(const Matrix& est, const Matrix& truth, Matrix* resid_out) {
  Eigen::ColPivHouseholderQR<Matrix> qr(truth);
  if (qr.rank() < truth.cols())
    throw std::runtime_error("fit_r2: collinear columns in the comparison matrix");
  const Matrix beta = qr.solve(est);
  const Matrix resid = est - truth * beta;
  Vector r2(est.cols());
  for (Index j = 0; j < est.cols(); ++j) {
    const double tot = est.col(j).squaredNorm();
    r2(j) = tot > 0.0 ? 1.0 - resid.col(j).squaredNorm() / tot : 0.0;
  }
  if (resid_out) *resid_out = resid;
  return r2;
}

inline double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double ma = a.mean(), mb = b.mean();
  const auto da = a.array() - ma;
  const auto db = b.array() - mb;
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  return denom > 0.0 ? (da * db).sum() / denom : 0.0;
}

}  // namespace detail

// Per-column R^2 from regressing each estimated factor (or loading)
// column on all true columns.
inline Vector fit_r2(const Matrix& est, const Matrix& truth) {
  if (est.rows() != truth.rows())
    throw std::invalid_argument("fit_r2: row dimension mismatch");
  return detail::column_regression_r2(est, truth, nullptr);
}

// Trace ratio tr(A0' P A0) / tr(A0' A0) with P the projection onto the
// column span of the estimate; equals 1 iff span(A0) lies inside the
// estimated span.
inline double multivariate_fit(const Matrix& a_est, const Matrix& a_true) {
  Eigen::ColPivHouseholderQR<Matrix> qr(a_est);
  if (qr.rank() < a_est.cols())
    throw std::runtime_error("multivariate_fit: rank-deficient estimate");
  const Matrix beta = qr.solve(a_true);
  const double top = (a_est * beta).squaredNorm();
  const double bottom = a_true.squaredNorm();
  return top / bottom;
}

// Average correlation over series between estimated and true common
// component columns.
inline double mean_common_correlation(const Matrix& c_est, const Matrix& c_true) {
  double acc = 0.0;
  for (Index i = 0; i < c_est.cols(); ++i)
    acc += detail::pearson(c_est.col(i), c_true.col(i));
  return acc / static_cast<double>(c_est.cols());
}

struct AvgErrors {
  double factor = 0.0;   // (1/T) |Fhat - F0 H|^2
  double loading = 0.0;  // (1/N) |Lhat - L0 H'^{-1}|^2
  double common = 0.0;   // (1/NT) |Chat - C0|^2
};

// Average squared errors in the factor space, the loading space, and the
// common component. The factor and loading errors use the composite form
// of the supplied rotation; the common error is rotation-free.
inline AvgErrors avg_errors(const FactorFit& fit, const GroundTruth& truth,
                            const RotationMatrix& rot) {
  if (truth.factors0.rows() != fit.n_periods() || truth.loadings0.rows() != fit.n_series() ||
      truth.factors0.cols() != fit.r)
    throw std::invalid_argument("avg_errors: fit and truth dimensions disagree");
  const Matrix h = rot.composite();
  const Matrix hinv_tr = detail::invert_r_by_r(h, "avg_errors rotation").transpose();
  AvgErrors out;
  out.factor = (fit.factors - truth.factors0 * h).squaredNorm() /
               static_cast<double>(fit.n_periods());
  out.loading = (fit.loadings - truth.loadings0 * hinv_tr).squaredNorm() /
                static_cast<double>(fit.n_series());
  out.common = (fit.factors * fit.loadings.transpose() - truth.common0).squaredNorm() /
               (static_cast<double>(fit.n_periods()) * static_cast<double>(fit.n_series()));
  return out;
}

// Residuals at one period/series from the factor and loading fit
// regressions; accumulated across replications they trace out the
// estimation-error distributions.
struct ErrorDistributionSample {
  Vector factor_resid;   // r, residual of each factor regression at t_star
  Vector loading_resid;  // r, residual of each loading regression at i_star
};

inline ErrorDistributionSample error_distribution(const FactorFit& fit, const GroundTruth& truth,
                                                  int t_star, int i_star) {
  if (t_star < 0 || t_star >= fit.n_periods() || i_star < 0 || i_star >= fit.n_series())
    throw std::invalid_argument("error_distribution: index out of range");
  if (truth.factors0.rows() != fit.n_periods() || truth.loadings0.rows() != fit.n_series())
    throw std::invalid_argument("error_distribution: fit and truth dimensions disagree");
  Matrix resid_f, resid_l;
  detail::column_regression_r2(fit.factors, truth.factors0, &resid_f);
  detail::column_regression_r2(fit.loadings, truth.loadings0, &resid_l);
  return {resid_f.row(t_star).transpose(), resid_l.row(i_star).transpose()};
}

// ---------------------------------------------------------------------------
// replication engine
// ---------------------------------------------------------------------------

struct McConfig {
  DgpSpec dgp;  // template; n and t are overridden by the grid
  std::vector<std::pair<int, int>> grid;
  int replications = 1;
  std::uint64_t base_seed = 0;

  bool want_coverage = false;
  bool want_histograms = false;
  // empirical coverage indices; -1 means t/2 and n/2
  int coverage_t = -1;
  int coverage_i = -1;
  // histogram sampling indices; -1 means t/2 and n/2
  int hist_t = -1;
  int hist_i = -1;

  // rotation for the factor-space error; loading errors always use H3.
  // Heterogeneous specs default to the composite heterogeneous rotation.
  std::optional<RotationKind> factor_rotation;

  int threads = 0;  // 0 = hardware concurrency
  double ci_z = 1.959963984540054;  // two-sided 95%
};

struct GridStats {
  int n = 0;
  int t = 0;
  int reps = 0;
  int failed = 0;
  std::string first_failure;

  Vector r2_f, r2_l;  // mean per-factor fit
  double m_f = 0.0, m_l = 0.0, rho_bar = 0.0;
  double rbar2 = 0.0;

  AvgErrors mean_err, median_err;

  Vector cov_factor, cov_loading;  // per-component coverage, when requested
  double cov_common = 0.0;
  Vector mean_se_factor, mean_se_loading;  // mean standard errors at the probe indices
  double mean_se_common = 0.0;

  Matrix hist_f, hist_l;  // reps x r residual samples, when requested
};

struct McReport {
  McConfig config;
  std::vector<GridStats> points;
};

namespace detail {

struct RepOutcome {
  bool ok = false;
  std::string error;
  Vector r2_f, r2_l;
  double m_f = 0.0, m_l = 0.0, rho = 0.0, rbar2 = 0.0;
  AvgErrors err;
  Vector cov_f, cov_l;  // 0/1 per component
  double cov_c = 0.0;
  Vector se_f, se_l;
  double se_c = 0.0;
  Vector hist_f, hist_l;
};

inline RepOutcome run_replication(const McConfig& cfg, int grid_idx, int rep) {
  RepOutcome out;
  DgpSpec spec = cfg.dgp;
  spec.n = cfg.grid[grid_idx].first;
  spec.t = cfg.grid[grid_idx].second;
  spec.seed = derive_key(cfg.base_seed, 0x9d, grid_idx, rep);

  const SimulatedPanel sim = generate(spec);
  FactorFit fit = pc_estimate(sim.panel, spec.r);
  fit = sign_align(fit, sim.truth);
  const bool het = sim.truth.heterogeneous();

  const RotationKind fkind =
      cfg.factor_rotation.value_or(het ? RotationKind::Hbar : RotationKind::H0);
  const RotationMatrix rot_f = rotation(fit, sim.truth, fkind);
  const RotationMatrix rot_l = rotation(fit, sim.truth, RotationKind::H3);

  out.err.factor = avg_errors(fit, sim.truth, rot_f).factor;
  const AvgErrors el = avg_errors(fit, sim.truth, rot_l);
  out.err.loading = el.loading;
  out.err.common = el.common;

  Matrix resid_f, resid_l;
  out.r2_f = column_regression_r2(fit.factors, sim.truth.factors0, &resid_f);
  out.r2_l = column_regression_r2(fit.loadings, sim.truth.loadings0, &resid_l);
  out.m_f = multivariate_fit(fit.factors, sim.truth.factors0);
  out.m_l = multivariate_fit(fit.loadings, sim.truth.loadings0);
  out.rho = mean_common_correlation(fit.factors * fit.loadings.transpose(), sim.truth.common0);
  out.rbar2 = sim.rbar2;

  if (cfg.want_coverage) {
    const int tc = cfg.coverage_t >= 0 ? cfg.coverage_t : spec.t / 2;
    const int ic = cfg.coverage_i >= 0 ? cfg.coverage_i : spec.n / 2;
    // interval targets use the exact-identity rotations: the factor row
    // is a cross-section regression (H4), the loading row a time-series
    // regression (H3); mixed strengths switch to the composite forms
    const RotationMatrix rot_zf =
        het ? rot_f : rotation(fit, sim.truth, RotationKind::H4);
    const RotationMatrix rot_zl =
        het ? rotation(fit, sim.truth, RotationKind::Hbar) : rot_l;
    const Vector zf = z_factor(fit, sim.truth, rot_zf, tc);
    const Vector zl = z_loading(fit, sim.truth, rot_zl, ic);
    const double zc = z_common(fit, sim.truth, ic, tc);
    out.cov_f = (zf.array().abs() <= cfg.ci_z).cast<double>();
    out.cov_l = (zl.array().abs() <= cfg.ci_z).cast<double>();
    out.cov_c = std::abs(zc) <= cfg.ci_z ? 1.0 : 0.0;
    out.se_f = var_factor(fit, tc).value.diagonal().cwiseSqrt();
    out.se_l = var_loading(fit, ic).value.diagonal().cwiseSqrt();
    out.se_c = std::sqrt(var_common(fit, ic, tc).value(0, 0));
  }
  if (cfg.want_histograms) {
    const int th = cfg.hist_t >= 0 ? cfg.hist_t : spec.t / 2;
    const int ih = cfg.hist_i >= 0 ? cfg.hist_i : spec.n / 2;
    if (th >= spec.t || ih >= spec.n)
      throw std::invalid_argument("histogram index out of range");
    out.hist_f = resid_f.row(th).transpose();
    out.hist_l = resid_l.row(ih).transpose();
  }
  out.ok = true;
  return out;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

// Runs the full experiment grid. Replications execute on a worker pool
// but land in replication-indexed slots and are reduced in a fixed
// order, so the report is identical for any thread count.
inline McReport run_experiment(const McConfig& cfg) {
  if (cfg.grid.empty()) throw std::invalid_argument("run_experiment: empty grid");
  if (cfg.replications < 1) throw std::invalid_argument("run_experiment: replications < 1");

  McReport report;
  report.config = cfg;
  const int nthreads = cfg.threads > 0
                           ? cfg.threads
                           : std::max(1u, std::thread::hardware_concurrency());

  for (int g = 0; g < static_cast<int>(cfg.grid.size()); ++g) {
    std::vector<detail::RepOutcome> outcomes(cfg.replications);
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (int rep = next.fetch_add(1); rep < cfg.replications; rep = next.fetch_add(1)) {
        try {
          outcomes[rep] = detail::run_replication(cfg, g, rep);
        } catch (const std::exception& e) {
          outcomes[rep].ok = false;
          outcomes[rep].error = e.what();
        }
      }
    };
    if (nthreads == 1 || cfg.replications == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < std::min(nthreads, cfg.replications); ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }

    GridStats gs;
    gs.n = cfg.grid[g].first;
    gs.t = cfg.grid[g].second;
    const int r = cfg.dgp.r;
    gs.r2_f = Vector::Zero(r);
    gs.r2_l = Vector::Zero(r);
    gs.cov_factor = Vector::Zero(r);
    gs.cov_loading = Vector::Zero(r);
    gs.mean_se_factor = Vector::Zero(r);
    gs.mean_se_loading = Vector::Zero(r);
    std::vector<double> ef, el, ec;
    std::vector<Vector> hf, hl;

    for (int rep = 0; rep < cfg.replications; ++rep) {
      const auto& o = outcomes[rep];
      if (!o.ok) {
        ++gs.failed;
        if (gs.first_failure.empty())
          gs.first_failure = "replication " + std::to_string(rep) + " at (n=" +
                             std::to_string(gs.n) + ", t=" + std::to_string(gs.t) +
                             "): " + o.error;
        continue;
      }
      ++gs.reps;
      gs.r2_f += o.r2_f;
      gs.r2_l += o.r2_l;
      gs.m_f += o.m_f;
      gs.m_l += o.m_l;
      gs.rho_bar += o.rho;
      gs.rbar2 += o.rbar2;
      gs.mean_err.factor += o.err.factor;
      gs.mean_err.loading += o.err.loading;
      gs.mean_err.common += o.err.common;
      ef.push_back(o.err.factor);
      el.push_back(o.err.loading);
      ec.push_back(o.err.common);
      if (cfg.want_coverage) {
        gs.cov_factor += o.cov_f;
        gs.cov_loading += o.cov_l;
        gs.cov_common += o.cov_c;
        gs.mean_se_factor += o.se_f;
        gs.mean_se_loading += o.se_l;
        gs.mean_se_common += o.se_c;
      }
      if (cfg.want_histograms) {
        hf.push_back(o.hist_f);
        hl.push_back(o.hist_l);
      }
    }

    if (gs.failed > 0.01 * cfg.replications)
      throw std::runtime_error("run_experiment: " + std::to_string(gs.failed) + "/" +
                               std::to_string(cfg.replications) +
                               " replications failed; first: " + gs.first_failure);
    if (gs.reps == 0) throw std::runtime_error("run_experiment: no successful replications");

    const double k = static_cast<double>(gs.reps);
    gs.r2_f /= k;
    gs.r2_l /= k;
    gs.m_f /= k;
    gs.m_l /= k;
    gs.rho_bar /= k;
    gs.rbar2 /= k;
    gs.mean_err.factor /= k;
    gs.mean_err.loading /= k;
    gs.mean_err.common /= k;
    gs.median_err.factor = detail::median_of(ef);
    gs.median_err.loading = detail::median_of(el);
    gs.median_err.common = detail::median_of(ec);
    if (cfg.want_coverage) {
      gs.cov_factor /= k;
      gs.cov_loading /= k;
      gs.cov_common /= k;
      gs.mean_se_factor /= k;
      gs.mean_se_loading /= k;
      gs.mean_se_common /= k;
    }
    if (cfg.want_histograms) {
      gs.hist_f.resize(gs.reps, r);
      gs.hist_l.resize(gs.reps, r);
      for (int rep = 0; rep < gs.reps; ++rep) {
        gs.hist_f.row(rep) = hf[rep].transpose();
        gs.hist_l.row(rep) = hl[rep].transpose();
      }
    }
    report.points.push_back(std::move(gs));
  }
  return report;
}

// ---------------------------------------------------------------------------
// rate regression
// ---------------------------------------------------------------------------

struct RateFit {
  double slope = 0.0;
  double se = 0.0;
};

// Least-squares slope of log(y) on log(x) with its standard error.
inline RateFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3)
    throw std::invalid_argument("loglog_slope: need at least 3 points");
  const int n = static_cast<int>(x.size());
  Vector lx(n), ly(n);
  for (int i = 0; i < n; ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0) throw std::invalid_argument("loglog_slope: nonpositive value");
    lx(i) = std::log(x[i]);
    ly(i) = std::log(y[i]);
  }
  const double mx = lx.mean(), my = ly.mean();
  const auto dx = lx.array() - mx;
  const double sxx = dx.square().sum();
  if (sxx <= 0.0) throw std::invalid_argument("loglog_slope: degenerate abscissa");
  RateFit fit;
  fit.slope = (dx * (ly.array() - my)).sum() / sxx;
  const auto resid = ly.array() - my - fit.slope * dx;
  const double s2 = n > 2 ? resid.square().sum() / static_cast<double>(n - 2) : 0.0;
  fit.se = std::sqrt(s2 / sxx);
  return fit;
}

struct RateReport {
  RateFit factor, loading, common;
  std::vector<double> sizes;  // the varying dimension per grid point
};

// Rates from a finished experiment: the slope of each mean error
// functional against whichever of N or T varies across the grid.
inline RateReport rate_slopes(const McReport& report) {
  if (report.points.size() < 3)
    throw std::invalid_argument("rate_slopes: need at least 3 grid points");
  bool n_varies = false, t_varies = false;
  for (size_t i = 1; i < report.points.size(); ++i) {
    n_varies |= report.points[i].n != report.points[0].n;
    t_varies |= report.points[i].t != report.points[0].t;
  }
  if (n_varies == t_varies && !n_varies)
    throw std::invalid_argument("rate_slopes: grid does not vary");
  RateReport out;
  std::vector<double> ef, el, ec;
  for (const auto& p : report.points) {
    out.sizes.push_back(static_cast<double>(n_varies ? p.n : p.t));
    ef.push_back(p.mean_err.factor);
    el.push_back(p.mean_err.loading);
    ec.push_back(p.mean_err.common);
  }
  out.factor = loglog_slope(out.sizes, ef);
  out.loading = loglog_slope(out.sizes, el);
  out.common = loglog_slope(out.sizes, ec);
  return out;
}

}  // namespace pcfm
