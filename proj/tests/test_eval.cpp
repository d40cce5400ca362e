#include <doctest.h>

#include <cmath>

#include "dafm/error.hpp"
#include "dafm/eval.hpp"
#include "dafm/random.hpp"
#include "helpers.hpp"

using namespace dafm;

TEST_SUITE("eval") {
  TEST_CASE("adjusted R2 of an exact linear relation is one") {
    const Eigen::MatrixXd est = testing::gaussian_matrix(50, 2, 1);
    const Eigen::VectorXd truth = 3.0 + 2.0 * est.col(0).array() - est.col(1).array();
    CHECK(adjusted_r2(truth, est) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("adjusted R2 is invariant to invertible recombination") {
    const Eigen::MatrixXd est = testing::gaussian_matrix(60, 3, 2);
    const Eigen::VectorXd truth = est.col(0) + testing::gaussian_matrix(60, 1, 3).col(0);
    Eigen::MatrixXd q = testing::gaussian_matrix(3, 3, 4) + 2.0 * Eigen::MatrixXd::Identity(3, 3);
    CHECK(adjusted_r2(truth, est * q) == doctest::Approx(adjusted_r2(truth, est)).epsilon(1e-10));
    CHECK(adjusted_r2(truth, -est) == doctest::Approx(adjusted_r2(truth, est)).epsilon(1e-12));
  }

  TEST_CASE("adjusted R2 against the formula") {
    const Eigen::MatrixXd est = testing::gaussian_matrix(30, 2, 5);
    const Eigen::VectorXd y = testing::gaussian_matrix(30, 1, 6).col(0) + 0.5 * est.col(1);
    Eigen::MatrixXd design(30, 3);
    design << Eigen::VectorXd::Ones(30), est;
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(y);
    const double rss = (y - design * coef).squaredNorm();
    const double tss = (y.array() - y.mean()).matrix().squaredNorm();
    const double expected = 1.0 - (rss / (30 - 3)) / (tss / 29);
    CHECK(adjusted_r2(y, est) == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("unrelated regressors give adjusted R2 near zero") {
    double total = 0.0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      total += adjusted_r2(testing::gaussian_matrix(100, 1, 1000 + s).col(0), testing::gaussian_matrix(100, 2, 5000 + s));
    }
    const double mean = total / 200;
    CHECK(mean > -0.05);
    CHECK(mean < 0.05);
  }

  TEST_CASE("collinear regressors fall back to a minimum-norm fit") {
    Eigen::MatrixXd est = testing::gaussian_matrix(40, 2, 7);
    est.col(1) = est.col(0);
    const Eigen::VectorXd truth = est.col(0) * 2.0;
    CHECK(adjusted_r2(truth, est) == doctest::Approx(1.0).epsilon(1e-10));
  }

  TEST_CASE("sign alignment") {
    const Eigen::MatrixXd f0 = testing::gaussian_matrix(40, 3, 8);
    Eigen::MatrixXd f = f0;
    f.col(1) *= -1.0;
    const Eigen::VectorXd s = sign_align(f, f0);
    CHECK(s(0) == 1.0);
    CHECK(s(1) == -1.0);
    CHECK(s(2) == 1.0);
    CHECK(sign_align(Eigen::MatrixXd::Zero(40, 1), f0.leftCols(1))(0) == 1.0);
  }

  TEST_CASE("cross-sectional idiosyncratic volatility") {
    Eigen::MatrixXd e(2, 1);
    e << 1.0, 4.0;
    CHECK(civ(Panel(e), {"m1", "m1"}).values(0) == doctest::Approx(1.5 * std::sqrt(2.0)));

    const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(4, 3, 2.0);
    const CivSeries zero = civ(Panel(flat), {"a", "a", "b", "b"});
    CHECK(zero.periods == std::vector<std::string>{"a", "b"});
    CHECK(zero.values.cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd r = testing::gaussian_matrix(6, 4, 9);
    const std::vector<std::string> labels = {"x", "x", "x", "y", "y", "y"};
    const CivSeries base = civ(Panel(r), labels);
    CHECK(testing::max_abs(civ(Panel(2.5 * r), labels).values - 2.5 * base.values) <= 1e-12);
    Eigen::MatrixXd swapped = r;
    swapped.col(0).swap(swapped.col(3));
    CHECK(testing::max_abs(civ(Panel(swapped), labels).values - base.values) <= 1e-12);
    Eigen::MatrixXd within = r;
    within.row(0).swap(within.row(2));
    CHECK(testing::max_abs(civ(Panel(within), labels).values - base.values) <= 1e-12);

    CHECK_THROWS_AS(civ(Panel(r), {"x"}), InvalidArgument);
    CHECK_THROWS_AS(civ(Panel(r), {"x", "x", "x", "y", "y", "z"}), DataError);
  }

  TEST_CASE("relative MSE") {
    Eigen::VectorXd actual(3), fc(3), base(3);
    actual << 1, 2, 3;
    fc << 1, 2, 4;
    base << 0, 2, 5;
    CHECK(relative_mse(fc, actual, base) == doctest::Approx(1.0 / 5.0));
    CHECK(relative_mse(base, actual, base) == 1.0);
    CHECK_THROWS_AS(relative_mse(fc, actual, actual), InvalidArgument);
    CHECK_THROWS_AS(relative_mse(fc.head(2), actual, base), InvalidArgument);
  }
}
