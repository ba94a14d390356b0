#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pcfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

//
// Core domain types for panel factor analysis. The data convention
// throughout is a T x N matrix with rows indexing time and columns
// indexing series. All values are immutable after construction and all
// operations are pure.
//

struct Panel {
  Matrix data;  // T x N
  bool standardized = false;
  Vector series_means;  // length N, populated when standardized
  Vector series_sds;    // length N, populated when standardized

  Index n_periods() const { return data.rows(); }
  Index n_series() const { return data.cols(); }
};

inline Panel make_panel(Matrix data) {
  if (data.rows() < 2 || data.cols() < 2)
    throw std::invalid_argument("make_panel: need at least 2 periods and 2 series, got " +
                                std::to_string(data.rows()) + "x" + std::to_string(data.cols()));
  return Panel{std::move(data), false, {}, {}};
}

// Result of the principal-component fit: factors are T x r with
// factors'factors/T = I_r, loadings are N x r with loadings'loadings/N
// diagonal, eig holds the squared singular values of X/sqrt(NT) in
// descending order, and residuals = X - factors * loadings'.
struct FactorFit {
  int r = 0;
  Matrix factors;    // T x r
  Matrix loadings;   // N x r
  Vector eig;        // r, descending
  Matrix residuals;  // T x N
  bool rank_deficient = false;

  Index n_periods() const { return factors.rows(); }
  Index n_series() const { return loadings.rows(); }
};

// Population quantities implied by a data-generating process: the limits
// of F'F/T and of the strength-normalized loading Gram matrix, the
// ordered eigenvalues d_r2 of sigma_L * sigma_F, and the limit q of the
// factor cross-moment (q * sigma_L * q' = diag(d_r2)).
struct PopulationLimits {
  Matrix sigma_F;  // r x r
  Matrix sigma_L;  // r x r
  Vector d_r2;     // r, descending
  Matrix q;        // r x r
  Matrix upsilon;  // r x r orthonormal
};

struct GroundTruth {
  Matrix factors0;   // T x r
  Matrix loadings0;  // N x r
  Matrix common0;    // T x N, factors0 * loadings0'
  Matrix errors;     // T x N, includes per-series scale
  Vector alphas;     // r, descending, in (0,1]
  PopulationLimits limits;

  bool heterogeneous() const {
    return alphas.size() > 0 && (alphas.maxCoeff() - alphas.minCoeff()) > 1e-12;
  }
};

enum class RotationKind { H0, H1, H2, H3, H4, Hbar };

inline const char* to_string(RotationKind k) {
  switch (k) {
    case RotationKind::H0: return "H0";
    case RotationKind::H1: return "H1";
    case RotationKind::H2: return "H2";
    case RotationKind::H3: return "H3";
    case RotationKind::H4: return "H4";
    case RotationKind::Hbar: return "Hbar";
  }
  return "?";
}

// An r x r rotation relating the estimated to the true factors,
// estimated factors ~ true factors * H. For the heterogeneous-strength
// kind (Hbar) `value` is the normalized rotation and `b_n` carries the
// diagonal of the strength matrix B = diag(N^(alpha_j/2)); the matrix
// acting on the factors is then the composite B * value * B^{-1}.
struct RotationMatrix {
  RotationKind kind = RotationKind::H0;
  Matrix value;  // r x r
  Vector b_n;    // diag of B_N, only for kind == Hbar

  Matrix composite() const {
    if (kind != RotationKind::Hbar) return value;
    return b_n.asDiagonal() * value * b_n.cwiseInverse().asDiagonal();
  }
};

// Column-wise affine normalization to mean 0, sd 1 (sd with the 1/(T-1)
// convention). Idempotent; original moments are recorded on the result.
inline Panel standardize_panel(const Panel& p) {
  const Index t = p.n_periods();
  const Index n = p.n_series();
  Vector means(n), sds(n);
  Matrix out(t, n);
  for (Index i = 0; i < n; ++i) {
    const double m = p.data.col(i).mean();
    const double ss = (p.data.col(i).array() - m).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(t - 1));
    if (sd == 0.0)
      throw std::invalid_argument("standardize_panel: column " + std::to_string(i) +
                                  " has zero standard deviation");
    means(i) = m;
    sds(i) = sd;
    out.col(i) = (p.data.col(i).array() - m) / sd;
  }
  return Panel{std::move(out), true, std::move(means), std::move(sds)};
}

// C = F * L', the rank <= r common component.
inline Matrix common_component(const Matrix& factors, const Matrix& loadings) {
  if (factors.cols() != loadings.cols())
    throw std::invalid_argument("common_component: factor count mismatch (" +
                                std::to_string(factors.cols()) + " vs " +
                                std::to_string(loadings.cols()) + ")");
  if (factors.cols() == 0) return Matrix::Zero(factors.rows(), loadings.rows());
  return factors * loadings.transpose();
}

}  // namespace pcfm
