#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "pcfm/dgp.hpp"
#include "pcfm/model.hpp"
#include "pcfm/rng.hpp"

namespace pcfm {

// Two-step factor-augmented regression: y_{t+h} on (Fhat_t, W_t) by least
// squares with a heteroskedasticity-robust covariance. The coefficients
// on Fhat estimate the rotated target (gamma through the inverse factor
// rotation), never gamma itself; the coefficients on W estimate beta.
struct FavarFit {
  Vector delta_hat;  // r + m, factor coefficients first
  Matrix vcov;       // (r+m) x (r+m) sandwich
  Vector tstats;
  int h = 0;
  int n_factors = 0;
  int n_covariates = 0;

  Vector standard_errors() const { return vcov.diagonal().cwiseSqrt(); }
};

inline FavarFit favar_fit(const Vector& y, const Matrix& w, const Matrix& f_hat, int h) {
  const Index t = f_hat.rows();
  const int r = static_cast<int>(f_hat.cols());
  const int m = static_cast<int>(w.cols());
  if (y.size() != t) throw std::invalid_argument("favar_fit: y length != factor rows");
  if (m > 0 && w.rows() != t) throw std::invalid_argument("favar_fit: W rows != factor rows");
  if (h < 0) throw std::invalid_argument("favar_fit: negative horizon");
  const Index rows = t - h;
  if (rows < r + m + 1)
    throw std::invalid_argument("favar_fit: sample too short for " + std::to_string(r + m) +
                                " regressors at horizon " + std::to_string(h));

  Matrix x(rows, r + m);
  x.leftCols(r) = f_hat.topRows(rows);
  if (m > 0) x.rightCols(m) = w.topRows(rows);
  const Vector resp = y.tail(rows);

  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  if (qr.rank() < r + m) throw std::runtime_error("favar_fit: rank-deficient regressor matrix");

  FavarFit fit;
  fit.h = h;
  fit.n_factors = r;
  fit.n_covariates = m;
  fit.delta_hat = qr.solve(resp);
  const Vector resid = resp - x * fit.delta_hat;

  const Matrix xtx_inv = (x.transpose() * x).inverse();
  const Matrix meat = x.transpose() * (x.array().colwise() * resid.array().square()).matrix();
  fit.vcov = xtx_inv * meat * xtx_inv;
  fit.tstats.resize(r + m);
  for (int k = 0; k < r + m; ++k) {
    const double se = std::sqrt(fit.vcov(k, k));
    fit.tstats(k) = se > 0.0 ? fit.delta_hat(k) / se : 0.0;
  }
  return fit;
}

struct FavarSim {
  Vector y;  // length T; entries before h+1 are unused and left at zero
  Matrix w;  // T x m
  SimulatedPanel sim;
};

// Simulates the two-step design: a factor panel plus an outcome
// y_{t+h} = gamma'F0_t + beta'W_t + eps_{t+h} with W and eps independent
// of the panel.
inline FavarSim favar_simulate(const DgpSpec& spec, const Vector& gamma, const Vector& beta,
                               int h, double noise_sd) {
  if (gamma.size() != spec.r) throw std::invalid_argument("favar_simulate: gamma length != r");
  if (h < 0 || h >= spec.t) throw std::invalid_argument("favar_simulate: horizon out of range");

  FavarSim out;
  out.sim = generate(spec);
  const Index t = spec.t;
  const int m = static_cast<int>(beta.size());

  Rng rng_w(derive_key(spec.seed, 0x57));
  Rng rng_eps(derive_key(spec.seed, 0x3f));
  out.w = m > 0 ? rng_w.gauss_matrix(t, m) : Matrix(t, 0);
  out.y = Vector::Zero(t);
  for (Index s = 0; s + h < t; ++s) {
    double v = gamma.dot(out.sim.truth.factors0.row(s));
    if (m > 0) v += beta.dot(out.w.row(s));
    out.y(s + h) = v + noise_sd * rng_eps.gauss();
  }
  return out;
}

}  // namespace pcfm
