#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dafm/estimator.hpp"
#include "dafm/panel.hpp"
#include "dafm/quantile.hpp"

namespace dafm {

enum class ForecastMethod { ar, ar_factors };

ForecastMethod parse_forecast_method(std::string_view name);  // "ar", "ar+factors"
std::string_view to_string(ForecastMethod method);

struct ForecastTask {
  Eigen::Index horizon = 1;
  Eigen::Index window = 120;
  int max_lag = 4;
  ForecastMethod method = ForecastMethod::ar_factors;
};

/// Direct h-step regression
///   y[t+h] - y[t] = intercept + sum_{m=0..p} lag_coef[m] (y[t-m] - y[t-m-1]) + factor_coef' F[t].
/// Factor columns that are exactly zero on the estimation sample are dropped
/// and get coefficient 0, so the AR model is nested exactly.
struct FactorArFit {
  int lags = 0;  // p
  Eigen::Index horizon = 1;
  double intercept = 0.0;
  Eigen::VectorXd lag_coef;     // p + 1 entries
  Eigen::VectorXd factor_coef;  // one per factor column
  Eigen::Index observations = 0;
};

/// OLS on every t with t - p - 1 >= 0 and t + horizon < y.size(). `factors`
/// has y.size() rows (zero columns gives the AR model). Throws
/// InvalidArgument when fewer observations than parameters remain and
/// NumericalError when the design is rank deficient.
FactorArFit fit_factor_ar(const Eigen::VectorXd& y, const Eigen::MatrixXd& factors, int lags, Eigen::Index horizon);

/// Forecast of y[origin + horizon] from data up to `origin`.
double predict_factor_ar(const FactorArFit& fit, const Eigen::VectorXd& y, const Eigen::MatrixXd& factors,
                         Eigen::Index origin);

/// p in 0..max_lag minimizing n ln(RSS/n) + k ln(n) of the AR regression,
/// every candidate fit on the sample usable by max_lag; ties go to the
/// smaller p.
int select_lags_bic(const Eigen::VectorXd& y, Eigen::Index horizon, int max_lag);

/// Factors estimated on panel rows [origin - window + 1, origin]; cached by
/// origin so several horizons can share window fits. With warm_start, a
/// window whose predecessor (origin - 1) is cached starts from the
/// predecessor's factors shifted by one period, so results depend on the
/// order in which origins are requested (rolling_forecast goes in time
/// order). Each window still uses data up to its origin only.
class WindowFactorCache {
 public:
  WindowFactorCache(const Panel& panel, Eigen::Index window, QuantileGrid grid, FitConfig cfg,
                    bool warm_start = true);
  /// Nullopt when the window fit failed; the message is kept in error().
  const std::optional<Eigen::MatrixXd>& factors(Eigen::Index origin);
  std::string error(Eigen::Index origin) const;

 private:
  const Panel& panel_;
  Eigen::Index window_;
  QuantileGrid grid_;
  FitConfig cfg_;
  bool warm_start_;
  std::map<Eigen::Index, std::optional<Eigen::MatrixXd>> cache_;
  std::map<Eigen::Index, std::string> errors_;
};

struct ForecastPoint {
  Eigen::Index origin = 0;  // 0-based row of the last observation used
  std::string origin_label;
  Eigen::Index horizon = 1;
  int lags = 0;
  double forecast = 0.0;   // NaN when missing
  double benchmark = 0.0;  // AR forecast
  double actual = 0.0;
  bool missing = false;
  std::string error;
};

struct ForecastResult {
  std::vector<ForecastPoint> points;
  Eigen::Index missing = 0;
  double relative_mse = 1.0;  // over the non-missing points, vs the AR benchmark
};

/// One origin: lag selection, AR benchmark and (for ar_factors) the
/// factor-augmented regression, using data with row index <= origin only.
ForecastPoint forecast_at_origin(const Panel& panel, const Eigen::VectorXd& y, Eigen::Index origin,
                                 const ForecastTask& task, WindowFactorCache& cache);

/// Rolling windows of length task.window ending at origins window-1 ..
/// len(y)-horizon-1, i.e. len(y) - window - horizon + 1 forecasts.
ForecastResult rolling_forecast(const Panel& panel, const Eigen::VectorXd& y, const ForecastTask& task,
                                WindowFactorCache& cache);
ForecastResult rolling_forecast(const Panel& panel, const Eigen::VectorXd& y, const ForecastTask& task,
                                const QuantileGrid& grid, const FitConfig& cfg);

Eigen::Index forecast_count(Eigen::Index length, Eigen::Index window, Eigen::Index horizon);

}  // namespace dafm
