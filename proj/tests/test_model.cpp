#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>

#include "pcfm/model.hpp"
#include "pcfm/rng.hpp"

using namespace pcfm;

TEST_CASE("standardize maps a simple column to mean 0, sd 1") {
  Matrix data(3, 2);
  data << 1, 4, 2, 5, 3, 9;
  const Panel out = standardize_panel(make_panel(data));
  CHECK(out.standardized);
  CHECK(out.data(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(out.data(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.data(2, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.series_means(0) == doctest::Approx(2.0));
  CHECK(out.series_sds(0) == doctest::Approx(1.0));  // 1/(T-1) convention
}

TEST_CASE("standardize is idempotent") {
  Rng rng(11);
  const Panel p = make_panel(rng.gauss_matrix(15, 4) * 3.0);
  const Panel once = standardize_panel(p);
  const Panel twice = standardize_panel(once);
  CHECK((twice.data - once.data).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("standardized moments check out against direct recomputation") {
  Rng rng(7);
  Matrix data = rng.gauss_matrix(20, 5);
  data.col(2) *= 14.0;
  data.col(3).array() += 100.0;
  const Panel out = standardize_panel(make_panel(data));
  for (int i = 0; i < 5; ++i) {
    double mean = 0.0;
    for (int t = 0; t < 20; ++t) mean += out.data(t, i);
    mean /= 20.0;
    double ss = 0.0;
    for (int t = 0; t < 20; ++t) ss += (out.data(t, i) - mean) * (out.data(t, i) - mean);
    const double sd = std::sqrt(ss / 19.0);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(sd - 1.0) < 1e-12);
  }
}

TEST_CASE("standardize rejects a constant column by index") {
  Matrix data(4, 3);
  data << 1, 5, 2, 2, 5, 1, 3, 5, 4, 4, 5, 3;
  try {
    standardize_panel(make_panel(data));
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("column 1") != std::string::npos);
  }
}

TEST_CASE("panels need at least two periods and two series") {
  CHECK_THROWS_AS(make_panel(Matrix::Ones(1, 5)), std::invalid_argument);
  CHECK_THROWS_AS(make_panel(Matrix::Ones(5, 1)), std::invalid_argument);
}

TEST_CASE("common component of all-ones vectors is all ones") {
  const Matrix c = common_component(Matrix::Ones(3, 1), Matrix::Ones(2, 1));
  CHECK(c.rows() == 3);
  CHECK(c.cols() == 2);
  CHECK((c.array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("empty factor set gives a zero common component") {
  const Matrix c = common_component(Matrix(3, 0), Matrix(4, 0));
  CHECK(c.rows() == 3);
  CHECK(c.cols() == 4);
  CHECK(c.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("common component matches a scalar triple loop") {
  Rng rng(3);
  const Matrix f = rng.gauss_matrix(5, 2);
  const Matrix l = rng.gauss_matrix(4, 2);
  const Matrix c = common_component(f, l);
  for (int t = 0; t < 5; ++t) {
    for (int i = 0; i < 4; ++i) {
      double acc = 0.0;
      for (int k = 0; k < 2; ++k) acc += f(t, k) * l(i, k);
      CHECK(c(t, i) == doctest::Approx(acc).epsilon(1e-14));
    }
  }
}

TEST_CASE("common component rejects mismatched factor counts") {
  CHECK_THROWS_AS(common_component(Matrix::Ones(3, 2), Matrix::Ones(4, 3)),
                  std::invalid_argument);
}

TEST_CASE("common component has numerical rank at most r") {
  Rng rng(19);
  for (int r : {1, 2, 3}) {
    const Matrix c = common_component(rng.gauss_matrix(12, r), rng.gauss_matrix(9, r));
    Eigen::JacobiSVD<Matrix> svd(c);
    const auto& sv = svd.singularValues();
    for (int k = r; k < sv.size(); ++k) CHECK(sv(k) < 1e-10 * c.norm());
  }
}
