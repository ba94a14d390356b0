#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "pcfm/model.hpp"
#include "pcfm/rng.hpp"

namespace pcfm {

enum class DgpKind { dgp1, dgp2, dgp1_nonorth };

inline const char* to_string(DgpKind k) {
  switch (k) {
    case DgpKind::dgp1: return "dgp1";
    case DgpKind::dgp2: return "dgp2";
    case DgpKind::dgp1_nonorth: return "dgp1_nonorth";
  }
  return "?";
}

// Per-series noise scale sigma_i. match_common_sd ties sigma_i to the
// time-series sd of the common component of series i (each series is then
// half signal, half noise); constant uses a fixed scale for every series.
struct SigmaRule {
  enum class Kind { match_common_sd, constant };
  Kind kind = Kind::match_common_sd;
  double value = 1.0;

  static SigmaRule match_common_sd() { return {Kind::match_common_sd, 1.0}; }
  static SigmaRule constant(double s) { return {Kind::constant, s}; }
};

struct DgpSpec {
  DgpKind kind = DgpKind::dgp2;
  int r = 3;
  Vector alphas;  // r, descending, in (0,1]
  Vector d2;      // r, strictly positive descending
  int n = 0;
  int t = 0;
  SigmaRule sigma_rule;
  std::uint64_t seed = 0;
};

struct SimulatedPanel {
  Panel panel;
  GroundTruth truth;
  double rbar2 = 0.0;
};

inline void validate(const DgpSpec& spec) {
  if (spec.r < 1) throw std::invalid_argument("dgp: r must be positive");
  if (spec.n < 2 || spec.t < 2) throw std::invalid_argument("dgp: need n >= 2 and t >= 2");
  if (spec.r > std::min(spec.n, spec.t))
    throw std::invalid_argument("dgp: r exceeds min(n, t)");
  if (spec.alphas.size() != spec.r || spec.d2.size() != spec.r)
    throw std::invalid_argument("dgp: alphas and d2 must have length r");
  for (int j = 0; j < spec.r; ++j) {
    if (spec.alphas(j) <= 0.0 || spec.alphas(j) > 1.0)
      throw std::invalid_argument("dgp: alphas must lie in (0,1]");
    if (spec.d2(j) <= 0.0) throw std::invalid_argument("dgp: d2 must be positive");
    if (j > 0 && spec.alphas(j) > spec.alphas(j - 1) + 1e-12)
      throw std::invalid_argument("dgp: alphas must be descending");
    if (j > 0 && spec.d2(j) > spec.d2(j - 1))
      throw std::invalid_argument("dgp: d2 must be descending");
  }
}

namespace detail {

// Orthonormal basis from the QR of an iid Gaussian draw, with the
// diagonal of R forced positive so the result does not depend on the
// linear-algebra backend's sign choices.
inline Matrix random_orthonormal(Index rows, int cols, Rng& rng) {
  const Matrix g = rng.gauss_matrix(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  const Matrix rmat = qr.matrixQR().topLeftCorner(cols, cols).triangularView<Eigen::Upper>();
  for (int j = 0; j < cols; ++j)
    if (rmat(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// Unit-diagonal lower-triangular matrix with iid standard normal entries
// below the diagonal.
inline Matrix random_unit_lower(int r, Rng& rng) {
  Matrix l = Matrix::Identity(r, r);
  for (int i = 1; i < r; ++i)
    for (int j = 0; j < i; ++j) l(i, j) = rng.gauss();
  return l;
}

inline Vector column_variances(const Matrix& m) {
  const Index t = m.rows();
  Vector out(m.cols());
  for (Index i = 0; i < m.cols(); ++i) {
    const double mean = m.col(i).mean();
    out(i) = (m.col(i).array() - mean).square().sum() / static_cast<double>(t - 1);
  }
  return out;
}

}  // namespace detail

// Population limits implied by arbitrary (sigma_F, sigma_L):
// d_r2 holds the ordered eigenvalues of sigma_L * sigma_F, upsilon the
// orthonormal eigenvectors of sigma_F^{1/2} sigma_L sigma_F^{1/2}, and
// q = D_r upsilon' sigma_L^{-1/2}.
inline PopulationLimits population_limits(const Matrix& sigma_F, const Matrix& sigma_L) {
  const int r = static_cast<int>(sigma_F.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> esf(sigma_F);
  Eigen::SelfAdjointEigenSolver<Matrix> esl(sigma_L);
  if (esf.eigenvalues().minCoeff() <= 0.0 || esl.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("population_limits: sigma_F and sigma_L must be positive definite");
  const Matrix sf_half = esf.operatorSqrt();
  const Matrix sl_inv_half = esl.operatorInverseSqrt();

  const Matrix core = sf_half * sigma_L * sf_half;
  Eigen::SelfAdjointEigenSolver<Matrix> esc(core);
  PopulationLimits lim;
  lim.sigma_F = sigma_F;
  lim.sigma_L = sigma_L;
  lim.d_r2.resize(r);
  lim.upsilon.resize(r, r);
  for (int j = 0; j < r; ++j) {
    lim.d_r2(j) = esc.eigenvalues()(r - 1 - j);
    lim.upsilon.col(j) = esc.eigenvectors().col(r - 1 - j);
  }
  for (int j = 0; j < r; ++j) {
    Index imax = 0;
    lim.upsilon.col(j).cwiseAbs().maxCoeff(&imax);
    if (lim.upsilon(imax, j) < 0.0) lim.upsilon.col(j) = -lim.upsilon.col(j);
  }
  lim.q = lim.d_r2.cwiseSqrt().asDiagonal() * lim.upsilon.transpose() * sl_inv_half;
  return lim;
}

inline PopulationLimits population_limits(const DgpSpec& spec) {
  validate(spec);
  const Matrix d2 = spec.d2.asDiagonal();
  const Matrix id = Matrix::Identity(spec.r, spec.r);
  switch (spec.kind) {
    case DgpKind::dgp2:
      return population_limits(id, d2);
    case DgpKind::dgp1:
    case DgpKind::dgp1_nonorth:
      // the nonorthogonal variant has no fixed limit (the mixing matrices
      // are a single draw); the base dgp1 limits serve as its reference
      return population_limits(d2, id);
  }
  throw std::invalid_argument("population_limits: unknown kind");
}

// Signal share: mean over series of the common-component variance divided
// by mean over series of the total variance.
inline double rbar2(const GroundTruth& truth, const Panel& panel) {
  if (truth.common0.rows() != panel.data.rows() || truth.common0.cols() != panel.data.cols())
    throw std::invalid_argument("rbar2: dimension mismatch");
  const Vector var_c = detail::column_variances(truth.common0);
  const Vector var_x = detail::column_variances(panel.data);
  if (var_x.minCoeff() <= 0.0) throw std::invalid_argument("rbar2: zero-variance series");
  return var_c.mean() / var_x.mean();
}

// Draws one panel X = F0 L0' + e per the requested process. Pure in the
// spec: the same spec (seed included) yields a bitwise-identical result.
inline SimulatedPanel generate(const DgpSpec& spec) {
  validate(spec);
  const Index t = spec.t;
  const Index n = spec.n;
  const int r = spec.r;

  Rng rng_u(derive_key(spec.seed, 1));
  Rng rng_v(derive_key(spec.seed, 2));
  Rng rng_e(derive_key(spec.seed, 3));
  Rng rng_mix(derive_key(spec.seed, 4));

  Vector b(r);
  for (int j = 0; j < r; ++j) b(j) = std::pow(static_cast<double>(n), spec.alphas(j) / 2.0);
  const Vector d = spec.d2.cwiseSqrt();

  Matrix f0, l0;
  switch (spec.kind) {
    case DgpKind::dgp1: {
      const Matrix u = detail::random_orthonormal(t, r, rng_u);
      const Matrix v = detail::random_orthonormal(n, r, rng_v);
      f0 = std::sqrt(static_cast<double>(t)) * u * d.asDiagonal();
      l0 = v * b.asDiagonal();
      break;
    }
    case DgpKind::dgp1_nonorth: {
      const Matrix u = detail::random_orthonormal(t, r, rng_u) * detail::random_unit_lower(r, rng_mix);
      const Matrix v = detail::random_orthonormal(n, r, rng_v) * detail::random_unit_lower(r, rng_mix);
      f0 = std::sqrt(static_cast<double>(t)) * u * d.asDiagonal();
      l0 = v * b.asDiagonal();
      break;
    }
    case DgpKind::dgp2: {
      f0 = rng_u.gauss_matrix(t, r);
      l0 = rng_v.gauss_matrix(n, r) * d.asDiagonal() * b.asDiagonal() /
           std::sqrt(static_cast<double>(n));
      break;
    }
  }

  SimulatedPanel out;
  out.truth.factors0 = std::move(f0);
  out.truth.loadings0 = std::move(l0);
  out.truth.common0 = out.truth.factors0 * out.truth.loadings0.transpose();
  out.truth.alphas = spec.alphas;
  out.truth.limits = population_limits(spec);

  Vector sigma(n);
  if (spec.sigma_rule.kind == SigmaRule::Kind::match_common_sd) {
    sigma = detail::column_variances(out.truth.common0).cwiseSqrt();
  } else {
    sigma.setConstant(spec.sigma_rule.value);
  }
  out.truth.errors = rng_e.gauss_matrix(t, n) * sigma.asDiagonal();

  out.panel = Panel{out.truth.common0 + out.truth.errors, false, {}, {}};
  out.rbar2 = rbar2(out.truth, out.panel);
  return out;
}

}  // namespace pcfm
