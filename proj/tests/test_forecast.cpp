#include <doctest.h>

#include <cmath>

#include "dafm/error.hpp"
#include "dafm/forecast.hpp"
#include "dafm/random.hpp"
#include "dafm/simgen.hpp"
#include "helpers.hpp"

using namespace dafm;

namespace {

Eigen::VectorXd random_walk(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd y(n);
  y(0) = 0.0;
  for (Eigen::Index t = 1; t < n; ++t) y(t) = y(t - 1) + rng.normal();
  return y;
}

FitConfig one_factor() {
  FitConfig cfg;
  cfg.r = 1;
  cfg.tol = 1e-5;
  return cfg;
}

}  // namespace

TEST_SUITE("forecast") {
  TEST_CASE("forecast counts") {
    CHECK(forecast_count(240, 120, 1) == 120);
    CHECK(forecast_count(240, 120, 3) == 118);
    CHECK(forecast_count(121, 120, 1) == 1);
    CHECK_THROWS_AS(forecast_count(120, 120, 1), InvalidArgument);
    CHECK_THROWS_AS(forecast_count(240, 120, 0), InvalidArgument);
  }

  TEST_CASE("noise-free regression is recovered exactly") {
    const Eigen::Index n = 80;
    const Eigen::MatrixXd f = testing::gaussian_matrix(n, 1, 3);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    y(1) = 0.3;
    // dy[t+1] = 0.1 + 0.4 dy[t] - 0.2 dy[t-1] + 0.7 f[t]
    for (Eigen::Index t = 2; t + 1 < n; ++t) {
      const double next = 0.1 + 0.4 * (y(t) - y(t - 1)) - 0.2 * (y(t - 1) - y(t - 2)) + 0.7 * f(t, 0);
      y(t + 1) = y(t) + next;
    }
    const FactorArFit fit = fit_factor_ar(y, f, 1, 1);
    CHECK(fit.intercept == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(fit.lag_coef(0) == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(fit.lag_coef(1) == doctest::Approx(-0.2).epsilon(1e-9));
    CHECK(fit.factor_coef(0) == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(fit.observations == n - 1 - 2);
    const Eigen::Index origin = n - 2;
    CHECK(predict_factor_ar(fit, y, f, origin) == doctest::Approx(y(origin + 1)).epsilon(1e-9));
  }

  TEST_CASE("coefficients solve the normal equations") {
    const Eigen::Index n = 36;
    const Eigen::VectorXd y = random_walk(n, 5);
    const Eigen::MatrixXd f = testing::gaussian_matrix(n, 2, 6);
    const int p = 2;
    const Eigen::Index h = 3;
    Eigen::MatrixXd x(0, 6);
    Eigen::VectorXd z(0);
    for (Eigen::Index t = p + 1; t + h < n; ++t) {
      x.conservativeResize(x.rows() + 1, Eigen::NoChange);
      z.conservativeResize(z.size() + 1);
      x.row(x.rows() - 1) << 1.0, y(t) - y(t - 1), y(t - 1) - y(t - 2), y(t - 2) - y(t - 3), f(t, 0), f(t, 1);
      z(z.size() - 1) = y(t + h) - y(t);
    }
    CHECK(x.rows() == 30);
    const Eigen::VectorXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * z);
    const FactorArFit fit = fit_factor_ar(y, f, p, h);
    CHECK(fit.observations == 30);
    CHECK(std::abs(fit.intercept - beta(0)) <= 1e-10);
    CHECK(testing::max_abs(fit.lag_coef - beta.segment(1, 3)) <= 1e-10);
    CHECK(testing::max_abs(fit.factor_coef - beta.tail(2)) <= 1e-10);
  }

  TEST_CASE("zero factors nest the AR model exactly") {
    const Eigen::VectorXd y = random_walk(60, 7);
    const Eigen::MatrixXd none(60, 0);
    const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(60, 3);
    for (Eigen::Index h : {1, 3}) {
      const FactorArFit ar = fit_factor_ar(y, none, 2, h);
      const FactorArFit nested = fit_factor_ar(y, zeros, 2, h);
      CHECK(nested.factor_coef == Eigen::VectorXd::Zero(3));
      CHECK(std::abs(predict_factor_ar(ar, y, none, 50) - predict_factor_ar(nested, y, zeros, 50)) <= 1e-10);
    }
  }

  TEST_CASE("regression guards") {
    const Eigen::VectorXd y = random_walk(10, 1);
    CHECK_THROWS_AS(fit_factor_ar(y, Eigen::MatrixXd(10, 0), 6, 1), InvalidArgument);
    CHECK_THROWS_AS(fit_factor_ar(y, Eigen::MatrixXd(9, 0), 1, 1), InvalidArgument);
    Eigen::MatrixXd dup = testing::gaussian_matrix(10, 2, 1);
    dup.col(1) = dup.col(0);
    CHECK_THROWS_AS(fit_factor_ar(y, dup, 0, 1), NumericalError);
    CHECK(parse_forecast_method("ar+factors") == ForecastMethod::ar_factors);
    CHECK(parse_forecast_method("ar") == ForecastMethod::ar);
    CHECK_THROWS_AS(parse_forecast_method("var"), InvalidArgument);
  }

  TEST_CASE("BIC lag selection") {
    // White-noise differences: no lag helps.
    CHECK(select_lags_bic(random_walk(500, 11), 1, 4) == 0);
    // AR(2) in differences.
    Rng rng(12);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(500);
    double d1 = 0.0, d2 = 0.0;
    for (Eigen::Index t = 1; t < 500; ++t) {
      const double d = 0.5 * d1 + 0.3 * d2 + rng.normal();
      y(t) = y(t - 1) + d;
      d2 = d1;
      d1 = d;
    }
    CHECK(select_lags_bic(y, 1, 4) >= 1);
    CHECK(select_lags_bic(y, 1, 0) == 0);
    CHECK_THROWS_AS(select_lags_bic(y.head(5), 1, 4), InvalidArgument);
  }

  TEST_CASE("forecasts use no data after the origin") {
    const SimData sim = gen_location_shift(12, 70, ErrorDist::gaussian(), 21);
    const Eigen::VectorXd y = random_walk(70, 22) + sim.truth.F0.col(0);
    ForecastTask task;
    task.window = 40;
    task.horizon = 2;
    task.max_lag = 2;
    const Eigen::Index origin = 50;

    WindowFactorCache cache(sim.panel, task.window, QuantileGrid::standard(), one_factor(), false);
    const ForecastPoint clean = forecast_at_origin(sim.panel, y, origin, task, cache);

    Eigen::MatrixXd corrupted = sim.panel.values();
    corrupted.bottomRows(70 - origin - 1).setConstant(1e6);
    Eigen::VectorXd y_bad = y;
    y_bad.tail(70 - origin - 1).setConstant(-1e6);
    y_bad(origin + task.horizon) = y(origin + task.horizon);
    const Panel bad(corrupted);
    WindowFactorCache bad_cache(bad, task.window, QuantileGrid::standard(), one_factor(), false);
    const ForecastPoint again = forecast_at_origin(bad, y_bad, origin, task, bad_cache);
    CHECK(again.forecast == clean.forecast);
    CHECK(again.benchmark == clean.benchmark);
    CHECK(again.lags == clean.lags);
    CHECK(again.actual == clean.actual);
  }

  TEST_CASE("rolling forecasts") {
    const SimData sim = gen_location_shift(10, 60, ErrorDist::gaussian(), 31);
    const Eigen::VectorXd y = random_walk(60, 32);
    ForecastTask task;
    task.window = 45;
    task.horizon = 3;
    task.max_lag = 2;
    const ForecastResult res = rolling_forecast(sim.panel, y, task, QuantileGrid::standard(), one_factor());
    REQUIRE(static_cast<Eigen::Index>(res.points.size()) == forecast_count(60, 45, 3));
    CHECK(res.points.front().origin == 44);
    CHECK(res.points.back().origin == 56);
    CHECK(res.missing == 0);
    for (const auto& p : res.points) CHECK(p.actual == y(p.origin + 3));
    CHECK(res.relative_mse > 0.0);

    task.method = ForecastMethod::ar;
    const ForecastResult ar = rolling_forecast(sim.panel, y, task, QuantileGrid::standard(), one_factor());
    CHECK(ar.relative_mse == 1.0);
  }

  TEST_CASE("unrelated factors do not help on average") {
    double total = 0.0;
    int runs = 0;
    for (std::uint64_t s = 0; s < 4; ++s) {
      const SimData sim = gen_location_shift(10, 90, ErrorDist::gaussian(), 100 + s);
      const Eigen::VectorXd y = random_walk(90, 200 + s);
      ForecastTask task;
      task.window = 50;
      task.max_lag = 1;
      const ForecastResult res = rolling_forecast(sim.panel, y, task, QuantileGrid::standard(), one_factor());
      total += res.relative_mse;
      ++runs;
    }
    const double mean = total / runs;
    CHECK(mean > 0.9);
    CHECK(mean < 1.3);
  }
}
