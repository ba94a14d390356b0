#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "pcfm/model.hpp"

namespace pcfm {

namespace detail {

// Deterministic column sign convention: the entry of largest magnitude in
// each column is made positive.
inline void fix_column_signs(Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    Index imax = 0;
    m.col(j).cwiseAbs().maxCoeff(&imax);
    if (m(imax, j) < 0.0) m.col(j) = -m.col(j);
  }
}

// Top-r eigenpairs of a symmetric matrix, eigenvalues descending.
inline void top_eigenpairs(const Matrix& sym, int r, Vector& values, Matrix& vectors) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("top_eigenpairs: eigendecomposition failed");
  const Index n = sym.rows();
  values.resize(r);
  vectors.resize(n, r);
  for (int j = 0; j < r; ++j) {
    values(j) = es.eigenvalues()(n - 1 - j);
    vectors.col(j) = es.eigenvectors().col(n - 1 - j);
  }
  fix_column_signs(vectors);
}

inline Matrix invert_r_by_r(const Matrix& m, const char* what) {
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible())
    throw std::runtime_error(std::string(what) + ": singular intermediate matrix");
  return lu.inverse();
}

}  // namespace detail

// Principal-component estimator. For X = p.data and Z = X/sqrt(NT) with
// truncated SVD Z ~ U_r D_r V_r', returns factors = sqrt(T) U_r and
// loadings = sqrt(N) V_r D_r, the minimizer of |X - F L'|^2 over rank-r
// pairs under F'F/T = I_r and L'L diagonal. The decomposition runs on
// the Gram matrix of the shorter panel dimension, so the cost is
// O(min(N,T)^3) plus one T x N product.
inline FactorFit pc_estimate(const Panel& p, int r) {
  const Index t = p.n_periods();
  const Index n = p.n_series();
  if (t < 2 || n < 2) throw std::invalid_argument("pc_estimate: panel too small");
  if (r < 1 || r > std::min(t, n))
    throw std::invalid_argument("pc_estimate: rank " + std::to_string(r) +
                                " out of range for " + std::to_string(t) + "x" +
                                std::to_string(n) + " panel");
  if (!p.data.allFinite()) throw std::invalid_argument("pc_estimate: non-finite entries in panel");

  const double nt = static_cast<double>(n) * static_cast<double>(t);
  FactorFit fit;
  fit.r = r;

  Vector eig;
  Matrix vecs;
  if (t <= n) {
    const Matrix gram = (p.data * p.data.transpose()) / nt;  // T x T
    detail::top_eigenpairs(gram, r, eig, vecs);
    fit.factors = std::sqrt(static_cast<double>(t)) * vecs;
    fit.loadings = p.data.transpose() * fit.factors / static_cast<double>(t);
  } else {
    const Matrix gram = (p.data.transpose() * p.data) / nt;  // N x N
    detail::top_eigenpairs(gram, r, eig, vecs);
    Vector d = eig.cwiseMax(0.0).cwiseSqrt();
    for (int j = 0; j < r; ++j)
      if (d(j) <= 0.0) d(j) = 1.0;  // dead direction; loadings column is zero anyway
    fit.loadings = std::sqrt(static_cast<double>(n)) * vecs * eig.cwiseMax(0.0).cwiseSqrt().asDiagonal();
    fit.factors = p.data * vecs * d.cwiseInverse().asDiagonal() / std::sqrt(static_cast<double>(n));
  }
  fit.eig = eig.cwiseMax(0.0);
  fit.rank_deficient = fit.eig(0) <= 0.0 || fit.eig(r - 1) / fit.eig(0) < 1e-12;
  fit.residuals = p.data - fit.factors * fit.loadings.transpose();
  return fit;
}

// Strength-corrected eigenvalues N * B_N^{-2} * eig, i.e. eig_j * N^(1-alpha_j).
// These converge to the ordered eigenvalues of sigma_L * sigma_F.
inline Vector scaled_eigenvalues(const FactorFit& fit, const Vector& alphas) {
  if (alphas.size() != fit.r)
    throw std::invalid_argument("scaled_eigenvalues: alphas length != r");
  const double n = static_cast<double>(fit.n_series());
  Vector out(fit.r);
  for (int j = 0; j < fit.r; ++j) {
    const double a = alphas(j);
    if (a <= 0.0 || a > 1.0)
      throw std::invalid_argument("scaled_eigenvalues: alpha out of (0,1]");
    if (j > 0 && a > alphas(j - 1) + 1e-12)
      throw std::invalid_argument("scaled_eigenvalues: alphas must be descending");
    out(j) = fit.eig(j) * std::pow(n, 1.0 - a);
  }
  return out;
}

// The rotation matrix family. All kinds are asymptotically equivalent;
// they differ in which sample cross-moments define them:
//   H0 = (L0'L0/N)(F0'Fhat/T) D^{-2}
//   H1 = (L0'L0)(Lhat'L0)^{-1}
//   H2 = (F0'F0)^{-1}(F0'Fhat)
//   H3 = (Fhat'F0/T)^{-1}
//   H4 = (L0'Lhat/N) D^{-2}
// Hbar is the heterogeneous-strength rotation; its composite form
// B_N * Hbar * B_N^{-1} is the matrix acting on the factors.
inline RotationMatrix rotation(const FactorFit& fit, const GroundTruth& truth, RotationKind kind) {
  const Index t = fit.n_periods();
  const Index n = fit.n_series();
  if (truth.factors0.rows() != t || truth.loadings0.rows() != n ||
      truth.factors0.cols() != fit.r || truth.loadings0.cols() != fit.r)
    throw std::invalid_argument("rotation: fit and truth dimensions disagree");
  if (fit.rank_deficient && kind != RotationKind::H2 && kind != RotationKind::H3)
    throw std::runtime_error("rotation: rank-deficient fit");

  const double tn = static_cast<double>(t);
  const double nn = static_cast<double>(n);
  RotationMatrix rot;
  rot.kind = kind;
  switch (kind) {
    case RotationKind::H0: {
      const Matrix lgram = truth.loadings0.transpose() * truth.loadings0 / nn;
      const Matrix cross = truth.factors0.transpose() * fit.factors / tn;
      rot.value = lgram * cross * fit.eig.cwiseInverse().asDiagonal();
      break;
    }
    case RotationKind::H1: {
      const Matrix lgram = truth.loadings0.transpose() * truth.loadings0;
      const Matrix cross = fit.loadings.transpose() * truth.loadings0;
      rot.value = lgram * detail::invert_r_by_r(cross, "rotation H1");
      break;
    }
    case RotationKind::H2: {
      const Matrix fgram = truth.factors0.transpose() * truth.factors0;
      rot.value = detail::invert_r_by_r(fgram, "rotation H2") *
                  (truth.factors0.transpose() * fit.factors);
      break;
    }
    case RotationKind::H3: {
      const Matrix cross = fit.factors.transpose() * truth.factors0 / tn;
      rot.value = detail::invert_r_by_r(cross, "rotation H3");
      break;
    }
    case RotationKind::H4: {
      rot.value = (truth.loadings0.transpose() * fit.loadings / nn) *
                  fit.eig.cwiseInverse().asDiagonal();
      break;
    }
    case RotationKind::Hbar: {
      if (truth.alphas.size() != fit.r)
        throw std::invalid_argument("rotation Hbar: truth.alphas required");
      Vector b(fit.r);
      for (int j = 0; j < fit.r; ++j) b(j) = std::pow(nn, truth.alphas(j) / 2.0);
      const auto binv = b.cwiseInverse();
      // both terms: the loading-Gram cross-moment and the error
      // cross-moment, each strength-normalized on both sides
      const Matrix term1 = binv.asDiagonal() * (truth.loadings0.transpose() * truth.loadings0) *
                           (truth.factors0.transpose() * fit.factors * binv.asDiagonal()) / tn;
      const Matrix term2 = binv.asDiagonal() *
                           (truth.loadings0.transpose() * truth.errors.transpose() * fit.factors) *
                           binv.asDiagonal() / tn;
      Vector scaled(fit.r);
      for (int j = 0; j < fit.r; ++j) scaled(j) = nn * fit.eig(j) / (b(j) * b(j));
      rot.value = (term1 + term2) * scaled.cwiseInverse().asDiagonal();
      rot.b_n = b;
      break;
    }
  }
  Eigen::FullPivLU<Matrix> lu(rot.value);
  if (!lu.isInvertible())
    throw std::runtime_error(std::string("rotation ") + to_string(kind) + ": result not invertible");
  return rot;
}

// Flips the sign of factor/loading column pairs so that the diagonal of
// Fhat'F0/T is non-negative. The common component is unchanged.
inline FactorFit sign_align(const FactorFit& fit, const GroundTruth& truth) {
  if (truth.factors0.rows() != fit.n_periods() || truth.factors0.cols() != fit.r)
    throw std::invalid_argument("sign_align: fit and truth dimensions disagree");
  FactorFit out = fit;
  const Matrix cross = fit.factors.transpose() * truth.factors0;
  for (int j = 0; j < fit.r; ++j) {
    if (cross(j, j) < 0.0) {
      out.factors.col(j) = -out.factors.col(j);
      out.loadings.col(j) = -out.loadings.col(j);
    }
  }
  return out;
}

// Residual sum of squares per observation, the PC objective.
inline double ssr(const Matrix& x, const Matrix& factors, const Matrix& loadings) {
  return (x - factors * loadings.transpose()).squaredNorm() /
         (static_cast<double>(x.rows()) * static_cast<double>(x.cols()));
}

}  // namespace pcfm
