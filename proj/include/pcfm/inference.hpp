#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcfm/model.hpp"
#include "pcfm/pce.hpp"

namespace pcfm {

enum class VarianceTarget { factor_t, loading_i, common_it };

// Plug-in variance estimate for one factor row, loading row, or common
// entry. The scale convention: `value` is the finite-sample variance of
// the estimate itself, so the square roots of its diagonal are standard
// errors directly. No strength exponent appears anywhere; the rates are
// absorbed by the scaled eigenvalue matrix and the sample averages.
struct VarianceEstimate {
  VarianceTarget target = VarianceTarget::common_it;
  int i = -1;
  int t = -1;
  Matrix value;  // r x r for factor/loading targets, 1 x 1 for common
  std::string rate_label;
};

inline Matrix residuals(const Panel& p, const FactorFit& fit) {
  if (p.data.rows() != fit.n_periods() || p.data.cols() != fit.n_series())
    throw std::invalid_argument("residuals: panel and fit dimensions disagree");
  return p.data - fit.factors * fit.loadings.transpose();
}

namespace detail {

inline void check_fit_for_variance(const FactorFit& fit) {
  if (fit.rank_deficient) throw std::runtime_error("variance estimate: rank-deficient fit");
  if (fit.residuals.rows() != fit.n_periods())
    throw std::invalid_argument("variance estimate: fit has no residuals");
}

// Lhat' diag(ehat_t^2) Lhat, the cross-section meat matrix at period t.
inline Matrix factor_meat(const FactorFit& fit, int t) {
  const auto w = fit.residuals.row(t).transpose().array().square();
  return fit.loadings.transpose() * (fit.loadings.array().colwise() * w).matrix();
}

// Fhat' diag(ehat_i^2) Fhat, the time-series meat matrix for series i.
inline Matrix loading_meat(const FactorFit& fit, int i) {
  const auto w = fit.residuals.col(i).array().square();
  return fit.factors.transpose() * (fit.factors.array().colwise() * w).matrix();
}

}  // namespace detail

// Variance of the factor estimate at period t. The factor row is the
// cross-section least-squares fit of X_t on the loadings, and the value
// is the corresponding heteroskedasticity sandwich
//   D^{-2} (N^{-2} sum_i Lhat_i Lhat_i' ehat_it^2) D^{-2},
// with D^2 = diag(eig) = Lhat'Lhat/N.
inline VarianceEstimate var_factor(const FactorFit& fit, int t) {
  detail::check_fit_for_variance(fit);
  if (t < 0 || t >= fit.n_periods()) throw std::invalid_argument("var_factor: t out of range");
  const double n = static_cast<double>(fit.n_series());
  const auto dinv = fit.eig.cwiseInverse().asDiagonal();
  VarianceEstimate est;
  est.target = VarianceTarget::factor_t;
  est.t = t;
  est.value = dinv * (detail::factor_meat(fit, t) / (n * n)) * dinv;
  est.rate_label = "var(Fhat_t); strength rate absorbed via eig^-1, no alpha input";
  return est;
}

// Variance of the loading estimate for series i: the time-series
// least-squares sandwich (1/T^2) sum_s Fhat_s Fhat_s' ehat_is^2.
inline VarianceEstimate var_loading(const FactorFit& fit, int i) {
  detail::check_fit_for_variance(fit);
  if (i < 0 || i >= fit.n_series()) throw std::invalid_argument("var_loading: i out of range");
  const double t = static_cast<double>(fit.n_periods());
  VarianceEstimate est;
  est.target = VarianceTarget::loading_i;
  est.i = i;
  est.value = detail::loading_meat(fit, i) / (t * t);
  est.rate_label = "var(Lhat_i); 1/T absorbed in the time average";
  return est;
}

// Variance of the common-component estimate at (i, t): the delta-method
// sum of a loading quadratic form in the factor variance and a factor
// quadratic form in the loading variance. Both pieces are >= 0.
inline VarianceEstimate var_common(const FactorFit& fit, int i, int t) {
  const VarianceEstimate vf = var_factor(fit, t);
  const VarianceEstimate vl = var_loading(fit, i);
  VarianceEstimate est;
  est.target = VarianceTarget::common_it;
  est.i = i;
  est.t = t;
  est.value.resize(1, 1);
  est.value(0, 0) = (fit.loadings.row(i) * vf.value * fit.loadings.row(i).transpose()).value() +
                    (fit.factors.row(t) * vl.value * fit.factors.row(t).transpose()).value();
  est.rate_label = "var(Chat_it); min(N^alpha,T) rate absorbed in the two plug-ins";
  return est;
}

namespace detail {

// A z-score with a floating-point floor: on noiseless data both the error
// and its standard error are pure rounding noise, which must read as an
// exact fit rather than a 0/0 artifact.
inline double safe_z(double num, double se, double scale) {
  const double floor = 1e-10 * (1.0 + scale);
  if (se <= floor) {
    if (std::abs(num) <= floor) return 0.0;
    return num > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
  }
  return num / se;
}

}  // namespace detail

// z-scores of the factor estimate at period t against the rotated truth.
inline Vector z_factor(const FactorFit& fit, const GroundTruth& truth,
                       const RotationMatrix& rot, int t) {
  const Matrix h = rot.composite();
  const Vector num = fit.factors.row(t).transpose() - h.transpose() * truth.factors0.row(t).transpose();
  const Matrix v = var_factor(fit, t).value;
  const double scale = fit.factors.row(t).cwiseAbs().maxCoeff();
  Vector z(fit.r);
  for (int k = 0; k < fit.r; ++k) z(k) = detail::safe_z(num(k), std::sqrt(v(k, k)), scale);
  return z;
}

// z-scores of the loading estimate for series i. For the heterogeneous
// rotation the error is premultiplied by H'^{-1} (centering stays at
// H3^{-1} L0_i) and the variance is transformed accordingly.
inline Vector z_loading(const FactorFit& fit, const GroundTruth& truth,
                        const RotationMatrix& rot, int i) {
  const Matrix v = var_loading(fit, i).value;
  Vector num;
  Matrix vv;
  if (rot.kind == RotationKind::Hbar) {
    const Matrix h = rot.composite();
    const Matrix hinv_tr = detail::invert_r_by_r(h.transpose(), "z_loading Hbar");
    const Matrix h3 = rotation(fit, truth, RotationKind::H3).value;
    num = hinv_tr * (fit.loadings.row(i).transpose() -
                     detail::invert_r_by_r(h3, "z_loading H3") * truth.loadings0.row(i).transpose());
    vv = hinv_tr * v * hinv_tr.transpose();
  } else {
    const Matrix hinv = detail::invert_r_by_r(rot.value, "z_loading");
    num = fit.loadings.row(i).transpose() - hinv * truth.loadings0.row(i).transpose();
    vv = v;
  }
  const double scale = fit.loadings.row(i).cwiseAbs().maxCoeff();
  Vector z(fit.r);
  for (int k = 0; k < fit.r; ++k) z(k) = detail::safe_z(num(k), std::sqrt(vv(k, k)), scale);
  return z;
}

// z-score of the common-component estimate at (i, t); rotation-free.
inline double z_common(const FactorFit& fit, const GroundTruth& truth, int i, int t) {
  const double est = fit.factors.row(t).dot(fit.loadings.row(i));
  const double se = std::sqrt(var_common(fit, i, t).value(0, 0));
  return detail::safe_z(est - truth.common0(t, i), se, std::abs(est));
}

struct StandardizedErrors {
  Matrix z_factors;   // T x r
  Matrix z_loadings;  // N x r
  Matrix z_common;    // T x N
};

// Full panel of z-scores; simulation diagnostic for the normality claims.
inline StandardizedErrors standardized_errors(const FactorFit& fit, const GroundTruth& truth,
                                              const RotationMatrix& rot) {
  const Index t = fit.n_periods();
  const Index n = fit.n_series();
  StandardizedErrors out;
  out.z_factors.resize(t, fit.r);
  out.z_loadings.resize(n, fit.r);
  out.z_common.resize(t, n);
  for (Index s = 0; s < t; ++s)
    out.z_factors.row(s) = z_factor(fit, truth, rot, static_cast<int>(s)).transpose();
  for (Index i = 0; i < n; ++i)
    out.z_loadings.row(i) = z_loading(fit, truth, rot, static_cast<int>(i)).transpose();
  // reuse the per-index sandwich pieces for the common grid
  std::vector<Matrix> vf(t), vl(n);
  for (Index s = 0; s < t; ++s) vf[s] = var_factor(fit, static_cast<int>(s)).value;
  for (Index i = 0; i < n; ++i) vl[i] = var_loading(fit, static_cast<int>(i)).value;
  for (Index s = 0; s < t; ++s) {
    for (Index i = 0; i < n; ++i) {
      const double est = fit.factors.row(s).dot(fit.loadings.row(i));
      const double var = (fit.loadings.row(i) * vf[s] * fit.loadings.row(i).transpose()).value() +
                         (fit.factors.row(s) * vl[i] * fit.factors.row(s).transpose()).value();
      out.z_common(s, i) = detail::safe_z(est - truth.common0(s, i), std::sqrt(var), std::abs(est));
    }
  }
  return out;
}

}  // namespace pcfm
