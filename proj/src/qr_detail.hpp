#pragma once

#include <Eigen/Dense>

namespace dafm::detail {

/// Exact basic-solution descent for min sum_i rho_{tau_i}(ys_i - xs_i' b)
/// started from `start`. Returns `start` unchanged when no basis exists or
/// the descent ends at a worse point.
Eigen::VectorXd polish_basic_solution(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys,
                                      const Eigen::VectorXd& tau, const Eigen::VectorXd& start,
                                      int* iterations = nullptr);

}  // namespace dafm::detail
