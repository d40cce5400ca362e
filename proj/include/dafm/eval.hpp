#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dafm/panel.hpp"

namespace dafm {

/// Adjusted R^2 of regressing `true_factor` on the columns of `estimated`
/// plus an intercept. Collinear columns fall back to a minimum-norm fit
/// with a warning.
double adjusted_r2(const Eigen::VectorXd& true_factor, const Eigen::MatrixXd& estimated);

/// Adjusted R^2 for every column of `truth`.
Eigen::VectorXd adjusted_r2_all(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimated);

/// Diagonal of sgn(F_hat' F0 / T); an exact zero counts as +1.
Eigen::VectorXd sign_align(const Eigen::MatrixXd& f_hat, const Eigen::MatrixXd& f0);

struct CivSeries {
  std::vector<std::string> periods;  // in order of first appearance
  Eigen::VectorXd values;
};

/// Per period, the equally weighted cross-entity mean of each entity's
/// within-period residual sample sd (divisor n - 1). `period_of_row` maps
/// every time row of `residuals` to a period label.
CivSeries civ(const Panel& residuals, const std::vector<std::string>& period_of_row);

/// MSE(forecasts) / MSE(baseline) against the same actuals.
double relative_mse(const Eigen::VectorXd& forecasts, const Eigen::VectorXd& actuals,
                    const Eigen::VectorXd& baseline_forecasts);

}  // namespace dafm
