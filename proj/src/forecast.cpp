#include "dafm/forecast.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dafm/error.hpp"
#include "dafm/eval.hpp"
#include "dafm/linalg.hpp"

namespace dafm {
namespace {

struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd response;
};

/// Regression rows for t in [first, last].
Design build_design(const Eigen::VectorXd& y, const Eigen::MatrixXd& factors, int lags, Eigen::Index horizon,
                    Eigen::Index first, Eigen::Index last) {
  const Eigen::Index n = last - first + 1;
  Design d;
  d.x.resize(n, 1 + (lags + 1) + factors.cols());
  d.response.resize(n);
  for (Eigen::Index row = 0; row < n; ++row) {
    const Eigen::Index t = first + row;
    d.x(row, 0) = 1.0;
    for (int m = 0; m <= lags; ++m) d.x(row, 1 + m) = y(t - m) - y(t - m - 1);
    for (Eigen::Index j = 0; j < factors.cols(); ++j) d.x(row, 2 + lags + j) = factors(t, j);
    d.response(row) = y(t + horizon) - y(t);
  }
  return d;
}

double ols_rss(const Eigen::MatrixXd& x, const Eigen::VectorXd& response) {
  const auto ls = linalg::least_squares(x, response);
  if (ls.rank < x.cols()) throw NumericalError("lag-selection design is rank deficient");
  return ls.residuals.squaredNorm();
}

}  // namespace

ForecastMethod parse_forecast_method(std::string_view name) {
  if (name == "ar") return ForecastMethod::ar;
  if (name == "ar+factors" || name == "ar+dafm") return ForecastMethod::ar_factors;
  throw InvalidArgument("unknown forecast method: " + std::string(name) + " (expected ar or ar+factors)");
}

std::string_view to_string(ForecastMethod method) {
  return method == ForecastMethod::ar ? "ar" : "ar+factors";
}

Eigen::Index forecast_count(Eigen::Index length, Eigen::Index window, Eigen::Index horizon) {
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (window < 1) throw InvalidArgument("window must be at least 1");
  if (window + horizon > length) {
    throw InvalidArgument("window + horizon (" + std::to_string(window + horizon) + ") exceeds the series length " +
                          std::to_string(length));
  }
  return length - window - horizon + 1;
}

FactorArFit fit_factor_ar(const Eigen::VectorXd& y, const Eigen::MatrixXd& factors, int lags, Eigen::Index horizon) {
  if (lags < 0) throw InvalidArgument("lag order must be non-negative");
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (factors.rows() != y.size()) throw InvalidArgument("factors must have one row per observation of y");
  const Eigen::Index first = lags + 1;
  const Eigen::Index last = y.size() - 1 - horizon;

  // Exactly-zero factor columns carry no information and are dropped.
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < factors.cols(); ++j) {
    if (last >= first && factors.col(j).segment(first, last - first + 1).cwiseAbs().maxCoeff() > 0.0) {
      kept.push_back(j);
    }
  }
  Eigen::MatrixXd used(y.size(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) used.col(static_cast<Eigen::Index>(c)) = factors.col(kept[c]);

  const Eigen::Index params = 2 + lags + used.cols();
  if (last - first + 1 < params) {
    throw InvalidArgument("forecast regression needs at least " + std::to_string(params) + " observations, has " +
                          std::to_string(std::max<Eigen::Index>(0, last - first + 1)));
  }
  const Design d = build_design(y, used, lags, horizon, first, last);
  const auto ls = linalg::least_squares(d.x, d.response);
  if (ls.rank < d.x.cols()) {
    throw NumericalError("forecast regression design is rank deficient (rank " + std::to_string(ls.rank) + " of " +
                         std::to_string(d.x.cols()) + ")");
  }
  FactorArFit fit;
  fit.lags = lags;
  fit.horizon = horizon;
  fit.observations = d.x.rows();
  fit.intercept = ls.coef(0);
  fit.lag_coef = ls.coef.segment(1, lags + 1);
  fit.factor_coef = Eigen::VectorXd::Zero(factors.cols());
  for (std::size_t c = 0; c < kept.size(); ++c) fit.factor_coef(kept[c]) = ls.coef(2 + lags + static_cast<Eigen::Index>(c));
  return fit;
}

double predict_factor_ar(const FactorArFit& fit, const Eigen::VectorXd& y, const Eigen::MatrixXd& factors,
                         Eigen::Index origin) {
  if (origin - fit.lags - 1 < 0 || origin >= y.size()) throw InvalidArgument("origin lacks the lags the fit needs");
  if (factors.cols() != fit.factor_coef.size()) throw InvalidArgument("factor count differs from the fit");
  double change = fit.intercept;
  for (int m = 0; m <= fit.lags; ++m) change += fit.lag_coef(m) * (y(origin - m) - y(origin - m - 1));
  for (Eigen::Index j = 0; j < factors.cols(); ++j) {
    if (fit.factor_coef(j) != 0.0) change += fit.factor_coef(j) * factors(origin, j);
  }
  return y(origin) + change;
}

int select_lags_bic(const Eigen::VectorXd& y, Eigen::Index horizon, int max_lag) {
  if (max_lag < 0) throw InvalidArgument("max_lag must be non-negative");
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  const Eigen::Index first = max_lag + 1;
  const Eigen::Index last = y.size() - 1 - horizon;
  const Eigen::Index n = last - first + 1;
  if (n < max_lag + 3) {
    throw InvalidArgument("lag selection needs at least " + std::to_string(max_lag + 3) +
                          " usable observations, has " + std::to_string(std::max<Eigen::Index>(0, n)));
  }
  const Eigen::MatrixXd none(y.size(), 0);
  int best = 0;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int p = 0; p <= max_lag; ++p) {
    const Design d = build_design(y, none, p, horizon, first, last);
    const double rss = ols_rss(d.x, d.response);
    const double dn = static_cast<double>(n);
    const double bic = dn * std::log(std::max(rss, std::numeric_limits<double>::min()) / dn) +
                       static_cast<double>(d.x.cols()) * std::log(dn);
    if (bic < best_bic) {
      best_bic = bic;
      best = p;
    }
  }
  return best;
}

WindowFactorCache::WindowFactorCache(const Panel& panel, Eigen::Index window, QuantileGrid grid, FitConfig cfg,
                                     bool warm_start)
    : panel_(panel), window_(window), grid_(std::move(grid)), cfg_(std::move(cfg)), warm_start_(warm_start) {
  if (window < 1 || window > panel.periods()) throw InvalidArgument("window must lie in [1, T]");
}

const std::optional<Eigen::MatrixXd>& WindowFactorCache::factors(Eigen::Index origin) {
  if (origin < window_ - 1 || origin >= panel_.periods()) throw InvalidArgument("origin outside the panel");
  auto it = cache_.find(origin);
  if (it != cache_.end()) return it->second;
  std::optional<Eigen::MatrixXd> f;
  FitConfig cfg = cfg_;
  const auto prev = cache_.find(origin - 1);
  if (warm_start_ && prev != cache_.end() && prev->second) {
    // Shift the previous window's factors by one period; the new period starts from the last estimate.
    Eigen::MatrixXd start(window_, cfg.r);
    start.topRows(window_ - 1) = prev->second->bottomRows(window_ - 1);
    start.row(window_ - 1) = prev->second->row(window_ - 1);
    cfg.initial_factors = std::move(start);
  }
  try {
    f = fit_dafm(panel_.slice_rows(origin - window_ + 1, window_), grid_, cfg).F;
  } catch (const Error& e) {
    errors_[origin] = e.what();
  }
  return cache_.emplace(origin, std::move(f)).first->second;
}

std::string WindowFactorCache::error(Eigen::Index origin) const {
  const auto it = errors_.find(origin);
  return it == errors_.end() ? std::string() : it->second;
}

ForecastPoint forecast_at_origin(const Panel& panel, const Eigen::VectorXd& y, Eigen::Index origin,
                                 const ForecastTask& task, WindowFactorCache& cache) {
  if (y.size() != panel.periods()) throw InvalidArgument("target and panel must have the same number of periods");
  if (origin < task.window - 1 || origin + task.horizon >= y.size()) {
    throw InvalidArgument("origin " + std::to_string(origin) + " has no full window or no realized target");
  }
  const Eigen::Index start = origin - task.window + 1;
  const Eigen::VectorXd yw = y.segment(start, task.window);
  const Eigen::Index local = task.window - 1;

  ForecastPoint point;
  point.origin = origin;
  point.origin_label = panel.time_labels()[static_cast<std::size_t>(origin)];
  point.horizon = task.horizon;
  point.actual = y(origin + task.horizon);
  point.lags = select_lags_bic(yw, task.horizon, task.max_lag);

  const Eigen::MatrixXd none(task.window, 0);
  point.benchmark = predict_factor_ar(fit_factor_ar(yw, none, point.lags, task.horizon), yw, none, local);
  if (task.method == ForecastMethod::ar) {
    point.forecast = point.benchmark;
    return point;
  }
  const auto& factors = cache.factors(origin);
  if (!factors) {
    point.missing = true;
    point.error = "window fit failed: " + cache.error(origin);
    point.forecast = std::numeric_limits<double>::quiet_NaN();
    return point;
  }
  try {
    const FactorArFit fit = fit_factor_ar(yw, *factors, point.lags, task.horizon);
    point.forecast = predict_factor_ar(fit, yw, *factors, local);
  } catch (const NumericalError& e) {
    point.missing = true;
    point.error = e.what();
    point.forecast = std::numeric_limits<double>::quiet_NaN();
  }
  return point;
}

ForecastResult rolling_forecast(const Panel& panel, const Eigen::VectorXd& y, const ForecastTask& task,
                                WindowFactorCache& cache) {
  const Eigen::Index count = forecast_count(y.size(), task.window, task.horizon);
  ForecastResult result;
  result.points.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index c = 0; c < count; ++c) {
    result.points.push_back(forecast_at_origin(panel, y, task.window - 1 + c, task, cache));
    if (result.points.back().missing) ++result.missing;
  }
  const Eigen::Index usable = count - result.missing;
  if (usable == 0) {
    result.relative_mse = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  Eigen::VectorXd f(usable), a(usable), b(usable);
  Eigen::Index j = 0;
  for (const auto& p : result.points) {
    if (p.missing) continue;
    f(j) = p.forecast;
    a(j) = p.actual;
    b(j) = p.benchmark;
    ++j;
  }
  result.relative_mse = relative_mse(f, a, b);
  return result;
}

ForecastResult rolling_forecast(const Panel& panel, const Eigen::VectorXd& y, const ForecastTask& task,
                                const QuantileGrid& grid, const FitConfig& cfg) {
  WindowFactorCache cache(panel, task.window, grid, cfg);
  return rolling_forecast(panel, y, task, cache);
}

}  // namespace dafm
