#include <doctest.h>

#include <cmath>

#include "dafm/error.hpp"
#include "dafm/lp_oracle.hpp"
#include "dafm/qr_solver.hpp"
#include "dafm/random.hpp"
#include "helpers.hpp"

using namespace dafm;

namespace {

Eigen::VectorXd heavy_response(const Eigen::MatrixXd& x, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(x.cols(), 1.0, -1.0);
  Eigen::VectorXd y = x * beta;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += rng.student_t(3.0);
  return y;
}

}  // namespace

TEST_SUITE("solver") {
  TEST_CASE("quantile regression matches the LP oracle") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
      const Eigen::MatrixXd z = testing::gaussian_matrix(40, 3, seed);
      const Eigen::VectorXd y = heavy_response(z, seed + 100);
      for (double tau : {0.1, 0.5, 0.85}) {
        const Eigen::VectorXd fast = quantile_regress(y, z, tau);
        const Eigen::VectorXd ref = lp_oracle_quantile(y, z, tau);
        const double f_fast = quantile_objective(y, z, tau, fast);
        const double f_ref = quantile_objective(y, z, tau, ref);
        CHECK(f_fast <= f_ref * (1 + 1e-9) + 1e-12);
        CHECK(std::abs(f_fast - f_ref) <= 1e-8 * (1 + f_ref));
      }
    }
  }

  TEST_CASE("weighted mixed-level regression matches the LP oracle") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      const Eigen::MatrixXd x = testing::gaussian_matrix(45, 2, seed * 7);
      const Eigen::VectorXd y = heavy_response(x, seed * 7 + 1);
      Rng rng(seed);
      Eigen::VectorXd tau(45), w(45);
      for (Eigen::Index i = 0; i < 45; ++i) {
        tau(i) = 0.1 + 0.2 * static_cast<double>(i % 5);
        w(i) = 0.5 + rng.uniform();
      }
      SolverStats stats;
      const Eigen::VectorXd b = solve_check_regression(x, y, tau, w, &stats);
      const Eigen::VectorXd ref = lp_oracle_check_regression(x, y, tau, w);
      const double f = check_regression_objective(x, y, tau, w, b);
      const double f_ref = check_regression_objective(x, y, tau, w, ref);
      CHECK(std::abs(f - f_ref) <= 1e-8 * (1 + f_ref));
      CHECK(stats.interior_iterations > 0);
    }
  }

  TEST_CASE("ADMM reaches the LP optimum") {
    const Eigen::MatrixXd x = testing::gaussian_matrix(60, 3, 5);
    const Eigen::VectorXd y = heavy_response(x, 6);
    Eigen::VectorXd tau = Eigen::VectorXd::Constant(60, 0.3);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(60);
    const AdmmResult res = admm_check_regression(x, y, tau, w);
    const Eigen::VectorXd ref = lp_oracle_check_regression(x, y, tau, w);
    const double f = check_regression_objective(x, y, tau, w, res.coef);
    const double f_ref = check_regression_objective(x, y, tau, w, ref);
    CHECK(std::abs(f - f_ref) <= 1e-6 * (1 + f_ref));

    AdmmOptions raw;
    raw.polish = false;
    const AdmmResult unpolished = admm_check_regression(x, y, tau, w, raw);
    CHECK(unpolished.converged);
    CHECK(unpolished.iterations <= raw.max_iterations);
    CHECK(check_regression_objective(x, y, tau, w, unpolished.coef) <= f_ref * (1 + 1e-6));
  }

  TEST_CASE("intercept-only median is a sample median") {
    Eigen::VectorXd y(5);
    y << 4, -1, 10, 2, 3;
    const Eigen::VectorXd b = quantile_regress(y, Eigen::MatrixXd::Ones(5, 1), 0.5);
    CHECK(b(0) == doctest::Approx(3.0).epsilon(1e-10));
    const Eigen::VectorXd q = quantile_regress(y, Eigen::MatrixXd::Ones(5, 1), 0.1);
    CHECK(q(0) == doctest::Approx(-1.0).epsilon(1e-10));
  }

  TEST_CASE("objective is positively homogeneous in the weights") {
    const Eigen::MatrixXd x = testing::gaussian_matrix(30, 2, 9);
    const Eigen::VectorXd y = heavy_response(x, 10);
    const Eigen::VectorXd tau = Eigen::VectorXd::Constant(30, 0.7);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(30);
    const Eigen::VectorXd b1 = solve_check_regression(x, y, tau, w);
    const Eigen::VectorXd b2 = solve_check_regression(x, y, tau, 3.5 * w);
    CHECK(check_regression_objective(x, y, tau, 3.5 * w, b2) ==
          doctest::Approx(3.5 * check_regression_objective(x, y, tau, w, b1)).epsilon(1e-9));
  }

  TEST_CASE("rank-deficient designs") {
    Eigen::MatrixXd z = testing::gaussian_matrix(20, 2, 3);
    z.col(1) = 2.0 * z.col(0);
    const Eigen::VectorXd y = testing::gaussian_matrix(20, 1, 4).col(0);
    CHECK_THROWS_AS(quantile_regress(y, z, 0.5), NumericalError);
    CHECK_THROWS_AS(quantile_regress(y.head(1), z.topRows(1), 0.5), InvalidArgument);

    std::vector<Eigen::MatrixXd> loadings(2, Eigen::MatrixXd::Zero(15, 2));
    loadings[0].col(0) = testing::gaussian_matrix(15, 1, 5).col(0);
    loadings[1].col(0) = testing::gaussian_matrix(15, 1, 6).col(0);
    const QuantileGrid grid({0.3, 0.7});
    const Eigen::VectorXd x_t = testing::gaussian_matrix(15, 1, 7).col(0);
    CHECK_THROWS_AS(composite_factor_step(x_t, loadings, grid), NumericalError);

    Eigen::VectorXd previous(2);
    previous << 0.25, -1.75;
    const Eigen::VectorXd f = composite_factor_step(x_t, loadings, grid, {}, &previous);
    CHECK(f(1) == -1.75);
    Eigen::VectorXd probe = f;
    for (double d : {-0.05, 0.05}) {
      probe(0) = f(0) + d;
      CHECK(composite_factor_objective(x_t, loadings, grid, probe) >=
            composite_factor_objective(x_t, loadings, grid, f) - 1e-12);
    }
  }

  TEST_CASE("composite factor step matches the stacked LP") {
    const QuantileGrid grid({0.2, 0.5, 0.8}, {1.0, 2.0, 0.5});
    std::vector<Eigen::MatrixXd> loadings;
    for (int k = 0; k < 3; ++k) loadings.push_back(testing::gaussian_matrix(12, 2, 20 + k));
    const Eigen::VectorXd x_t = heavy_response(loadings[1], 30);
    const StackedDesign stacked = stack_loadings(loadings, grid);
    CHECK(stacked.design.rows() == 36);
    Eigen::VectorXd y(36);
    for (int k = 0; k < 3; ++k) y.segment(12 * k, 12) = x_t;
    const Eigen::VectorXd ref = lp_oracle_check_regression(stacked.design, y, stacked.tau, stacked.weight);
    for (auto method : {FactorStepMethod::interior_point, FactorStepMethod::admm}) {
      FactorStepOptions opt;
      opt.method = method;
      const Eigen::VectorXd f = composite_factor_step(x_t, loadings, grid, opt);
      CHECK(composite_factor_objective(x_t, loadings, grid, f) ==
            doctest::Approx(composite_factor_objective(x_t, loadings, grid, ref)).epsilon(1e-7));
    }
  }
}
