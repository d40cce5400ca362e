#pragma once

#include <Eigen/Dense>

namespace dafm {

/// Reference solver: the check-loss regression written as the linear program
///   min sum_i w_i (tau_i u_i + (1 - tau_i) v_i)
///   s.t. x_i'(b+ - b-) + u_i - v_i = y_i,  b+, b-, u, v >= 0
/// and solved by a dense tableau simplex with Bland's anti-cycling rule.
/// Slow but simple; intended for small instances in tests.
Eigen::VectorXd lp_oracle_check_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& tau, const Eigen::VectorXd& weight);

/// Single-level quantile regression of y on z through the oracle.
Eigen::VectorXd lp_oracle_quantile(const Eigen::VectorXd& y, const Eigen::MatrixXd& z, double tau);

}  // namespace dafm
