#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pcfm/dgp.hpp"
#include "pcfm/inference.hpp"
#include "pcfm/pce.hpp"
#include "pcfm/rng.hpp"

using namespace pcfm;

namespace {

DgpSpec strong_dgp2(int n, int t) {
  DgpSpec spec;
  spec.kind = DgpKind::dgp2;
  spec.r = 3;
  spec.alphas = Vector::Ones(3);
  spec.d2 = (Vector(3) << 3, 2, 1).finished();
  spec.n = n;
  spec.t = t;
  spec.sigma_rule = SigmaRule::constant(1.0);
  return spec;
}

// hand-built fit for the closed-form checks; only the fields the variance
// estimators read are populated
FactorFit synthetic_fit(int t, int n, const Matrix& factors, const Matrix& loadings,
                        const Vector& eig, double resid_value) {
  FactorFit fit;
  fit.r = static_cast<int>(eig.size());
  fit.factors = factors;
  fit.loadings = loadings;
  fit.eig = eig;
  fit.residuals = Matrix::Constant(t, n, resid_value);
  return fit;
}

}  // namespace

TEST_CASE("residuals vanish for noiseless and saturated fits") {
  DgpSpec spec = strong_dgp2(12, 16);
  spec.sigma_rule = SigmaRule::constant(0.0);
  spec.seed = 4;
  const SimulatedPanel sim = generate(spec);
  const FactorFit fit = pc_estimate(sim.panel, 3);
  CHECK(residuals(sim.panel, fit).norm() < 1e-10 * sim.panel.data.norm());

  Rng rng(9);
  const Panel p = make_panel(rng.gauss_matrix(5, 8));
  const FactorFit full = pc_estimate(p, 5);
  CHECK(residuals(p, full).norm() < 1e-10 * p.data.norm());
}

TEST_CASE("residuals are orthogonal to the estimated factors") {
  Rng rng(21);
  const Panel p = make_panel(rng.gauss_matrix(10, 8));
  const FactorFit fit = pc_estimate(p, 2);
  const Matrix e = residuals(p, fit);
  CHECK((fit.factors.transpose() * e).norm() < 1e-8 * e.norm());
  CHECK((e - fit.residuals).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("factor variance closed form") {
  const int n = 25, t = 10;
  const double s = 0.7, d2 = 1.3;
  const FactorFit fit = synthetic_fit(t, n, Matrix::Ones(t, 1), Matrix::Ones(n, 1),
                                      Vector::Constant(1, d2), s);
  const VarianceEstimate est = var_factor(fit, 3);
  CHECK(est.value(0, 0) == doctest::Approx(s * s / (n * d2 * d2)).epsilon(1e-12));

  FactorFit quiet = fit;
  quiet.residuals.row(4).setZero();
  CHECK(var_factor(quiet, 4).value.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loading variance closed form") {
  const int n = 6, t = 40;
  const double s = 1.4;
  const FactorFit fit = synthetic_fit(t, n, Matrix::Ones(t, 1), Matrix::Ones(n, 1),
                                      Vector::Ones(1), s);
  const VarianceEstimate est = var_loading(fit, 2);
  CHECK(est.value(0, 0) == doctest::Approx(s * s / t).epsilon(1e-12));

  FactorFit quiet = fit;
  quiet.residuals.col(1).setZero();
  CHECK(var_loading(quiet, 1).value.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("common variance adds the two quadratic forms") {
  const int n = 30, t = 50;
  const double s = 0.9;
  const FactorFit fit = synthetic_fit(t, n, Matrix::Ones(t, 1), Matrix::Ones(n, 1),
                                      Vector::Ones(1), s);
  const VarianceEstimate est = var_common(fit, 7, 11);
  CHECK(est.value(0, 0) == doctest::Approx(s * s / n + s * s / t).epsilon(1e-12));
}

TEST_CASE("variance estimates are positive semi-definite") {
  DgpSpec spec = strong_dgp2(40, 60);
  spec.seed = 14;
  const SimulatedPanel sim = generate(spec);
  const FactorFit fit = pc_estimate(sim.panel, 3);
  for (int t : {0, 17, 59}) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(var_factor(fit, t).value);
    CHECK(es.eigenvalues().minCoeff() > -1e-14);
  }
  for (int i : {0, 8, 39}) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(var_loading(fit, i).value);
    CHECK(es.eigenvalues().minCoeff() > -1e-14);
    CHECK(var_common(fit, i, 5).value(0, 0) >= 0.0);
  }
}

TEST_CASE("noiseless data produces zero z-scores") {
  DgpSpec spec = strong_dgp2(20, 30);
  spec.sigma_rule = SigmaRule::constant(0.0);
  spec.seed = 6;
  const SimulatedPanel sim = generate(spec);
  const FactorFit fit = sign_align(pc_estimate(sim.panel, 3), sim.truth);
  const RotationMatrix rot = rotation(fit, sim.truth, RotationKind::H4);
  const StandardizedErrors z = standardized_errors(fit, sim.truth, rot);
  CHECK(z.z_factors.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(z.z_loadings.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(z.z_common.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("full z-score panel agrees with the pointwise calls") {
  DgpSpec spec = strong_dgp2(15, 12);
  spec.seed = 41;
  const SimulatedPanel sim = generate(spec);
  const FactorFit fit = sign_align(pc_estimate(sim.panel, 3), sim.truth);
  const RotationMatrix rot = rotation(fit, sim.truth, RotationKind::H4);
  const StandardizedErrors z = standardized_errors(fit, sim.truth, rot);
  CHECK((z.z_factors.row(7).transpose() - z_factor(fit, sim.truth, rot, 7)).norm() < 1e-12);
  CHECK((z.z_loadings.row(4).transpose() - z_loading(fit, sim.truth, rot, 4)).norm() < 1e-12);
  CHECK(z.z_common(9, 3) == doctest::Approx(z_common(fit, sim.truth, 3, 9)).epsilon(1e-12));
  CHECK(z.z_common.allFinite());
}

TEST_CASE("plug-in variances track the replication variance") {
  // strong case: the empirical variance of the estimation error across
  // replications must match the mean plug-in within 15%
  DgpSpec spec = strong_dgp2(200, 200);
  const int reps = 600, tc = 100, ic = 100;
  Matrix err_f(reps, 3), err_l(reps, 3);
  Vector mean_vf = Vector::Zero(3), mean_vl = Vector::Zero(3);
  for (int rep = 0; rep < reps; ++rep) {
    spec.seed = derive_key(77, rep);
    const SimulatedPanel sim = generate(spec);
    const FactorFit fit = sign_align(pc_estimate(sim.panel, 3), sim.truth);
    const Matrix h4 = rotation(fit, sim.truth, RotationKind::H4).value;
    const Matrix h3 = rotation(fit, sim.truth, RotationKind::H3).value;
    err_f.row(rep) = (fit.factors.row(tc).transpose() -
                      h4.transpose() * sim.truth.factors0.row(tc).transpose())
                         .transpose();
    err_l.row(rep) = (fit.loadings.row(ic).transpose() -
                      h3.inverse() * sim.truth.loadings0.row(ic).transpose())
                         .transpose();
    mean_vf += var_factor(fit, tc).value.diagonal();
    mean_vl += var_loading(fit, ic).value.diagonal();
  }
  mean_vf /= reps;
  mean_vl /= reps;
  for (int k = 0; k < 3; ++k) {
    const double mf = err_f.col(k).mean();
    const double vf = (err_f.col(k).array() - mf).square().sum() / (reps - 1);
    CHECK(std::abs(vf / mean_vf(k) - 1.0) < 0.15);
    const double ml = err_l.col(k).mean();
    const double vl = (err_l.col(k).array() - ml).square().sum() / (reps - 1);
    CHECK(std::abs(vl / mean_vl(k) - 1.0) < 0.15);
  }
}

TEST_CASE("common-component intervals cover at close to the nominal rate") {
  DgpSpec spec = strong_dgp2(200, 200);
  const int reps = 400;
  int outside = 0;
  for (int rep = 0; rep < reps; ++rep) {
    spec.seed = derive_key(93, rep);
    const SimulatedPanel sim = generate(spec);
    const FactorFit fit = sign_align(pc_estimate(sim.panel, 3), sim.truth);
    outside += std::abs(z_common(fit, sim.truth, 100, 100)) > 1.96;
  }
  const double rate = static_cast<double>(outside) / reps;
  CHECK(rate > 0.02);
  CHECK(rate < 0.10);
}

TEST_CASE("z-scores are invariant to column sign flips") {
  DgpSpec spec = strong_dgp2(30, 40);
  spec.seed = 52;
  const SimulatedPanel sim = generate(spec);
  const FactorFit fit = pc_estimate(sim.panel, 3);
  FactorFit flipped = fit;
  flipped.factors.col(2) = -flipped.factors.col(2);
  flipped.loadings.col(2) = -flipped.loadings.col(2);

  const Vector z1 = z_factor(fit, sim.truth, rotation(fit, sim.truth, RotationKind::H4), 5);
  const Vector z2 =
      z_factor(flipped, sim.truth, rotation(flipped, sim.truth, RotationKind::H4), 5);
  CHECK((z1.cwiseAbs() - z2.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-10);

  const double c1 = z_common(fit, sim.truth, 3, 5);
  const double c2 = z_common(flipped, sim.truth, 3, 5);
  CHECK(c1 == doctest::Approx(c2).epsilon(1e-12));
}

TEST_CASE("z-scores are invariant to a common rescaling of the data") {
  DgpSpec spec = strong_dgp2(30, 40);
  spec.seed = 53;
  const SimulatedPanel sim = generate(spec);
  const FactorFit fit = sign_align(pc_estimate(sim.panel, 3), sim.truth);

  const double c = 3.0;
  SimulatedPanel scaled = sim;
  scaled.panel.data *= c;
  scaled.truth.loadings0 *= c;
  scaled.truth.common0 *= c;
  scaled.truth.errors *= c;
  const FactorFit fit2 = sign_align(pc_estimate(scaled.panel, 3), scaled.truth);

  const Vector z1 = z_factor(fit, sim.truth, rotation(fit, sim.truth, RotationKind::H4), 8);
  const Vector z2 =
      z_factor(fit2, scaled.truth, rotation(fit2, scaled.truth, RotationKind::H4), 8);
  CHECK((z1 - z2).cwiseAbs().maxCoeff() < 1e-8);

  const Vector l1 = z_loading(fit, sim.truth, rotation(fit, sim.truth, RotationKind::H3), 4);
  const Vector l2 =
      z_loading(fit2, scaled.truth, rotation(fit2, scaled.truth, RotationKind::H3), 4);
  CHECK((l1 - l2).cwiseAbs().maxCoeff() < 1e-8);

  CHECK(z_common(fit, sim.truth, 4, 8) ==
        doctest::Approx(z_common(fit2, scaled.truth, 4, 8)).epsilon(1e-8));
}

TEST_CASE("heterogeneous loading z-scores stay calibrated") {
  DgpSpec spec;
  spec.kind = DgpKind::dgp2;
  spec.r = 3;
  spec.alphas = (Vector(3) << 1.0, 0.8, 0.6).finished();
  spec.d2 = (Vector(3) << 3, 2, 1).finished();
  spec.n = 400;
  spec.t = 400;
  spec.sigma_rule = SigmaRule::constant(1.0);
  const int reps = 300;
  Vector cov = Vector::Zero(3);
  for (int rep = 0; rep < reps; ++rep) {
    spec.seed = derive_key(67, rep);
    const SimulatedPanel sim = generate(spec);
    const FactorFit fit = sign_align(pc_estimate(sim.panel, 3), sim.truth);
    const RotationMatrix hbar = rotation(fit, sim.truth, RotationKind::Hbar);
    const Vector z = z_loading(fit, sim.truth, hbar, 200);
    cov += (z.array().abs() <= 1.959963984540054).cast<double>().matrix();
  }
  cov /= reps;
  for (int k = 0; k < 3; ++k) {
    CHECK(cov(k) > 0.88);
    CHECK(cov(k) < 0.99);
  }
}

TEST_CASE("variance estimators reject bad requests") {
  DgpSpec spec = strong_dgp2(10, 12);
  spec.seed = 3;
  const SimulatedPanel sim = generate(spec);
  FactorFit fit = pc_estimate(sim.panel, 3);
  CHECK_THROWS_AS(var_factor(fit, -1), std::invalid_argument);
  CHECK_THROWS_AS(var_factor(fit, 12), std::invalid_argument);
  CHECK_THROWS_AS(var_loading(fit, 10), std::invalid_argument);
  fit.rank_deficient = true;
  CHECK_THROWS_AS(var_factor(fit, 0), std::runtime_error);
}
