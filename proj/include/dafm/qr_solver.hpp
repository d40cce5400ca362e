#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dafm/panel.hpp"
#include "dafm/quantile.hpp"

namespace dafm {

/// Diagnostics of one check-loss regression solve.
struct SolverStats {
  int interior_iterations = 0;
  int descent_iterations = 0;
  double duality_gap = 0.0;
  bool polished = false;  // the exact basic solution replaced the interior point
};

/// Minimizes sum_i weight_i * rho_{tau_i}(y_i - x_i' b) over b.
///
/// Rows are scaled by their weights (rho is positively homogeneous), the
/// dual linear program is solved by a Mehrotra predictor-corrector interior
/// point method, and the result is polished into an exact basic solution by
/// simplex-type edge descent. The returned point is never worse than the
/// interior point. X must have full column rank.
Eigen::VectorXd solve_check_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& tau, const Eigen::VectorXd& weight,
                                       SolverStats* stats = nullptr);

/// Weighted check loss sum_i weight_i rho_{tau_i}(y_i - x_i' b).
double check_regression_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& tau, const Eigen::VectorXd& weight,
                                  const Eigen::VectorXd& b);

/// tau-th quantile regression of y (length T) on the columns of z (T x r), no
/// implicit intercept. Throws InvalidArgument when T < r and NumericalError
/// when z is rank deficient.
Eigen::VectorXd quantile_regress(const Eigen::VectorXd& y, const Eigen::MatrixXd& z, double tau);

double quantile_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& z, double tau,
                          const Eigen::VectorXd& coef);

struct AdmmOptions {
  double penalty = 1.0;
  double tolerance = 1e-7;  // on max(primal, dual) residual infinity norms
  int max_iterations = 2000;
  double balance_ratio = 10.0;
  double balance_factor = 2.0;
  int balance_interval = 10;  // iterations between penalty updates
  int balance_stop = 500;     // penalty is frozen after this many iterations
  bool polish = true;  // finish with the exact basic-solution descent
};

struct AdmmResult {
  Eigen::VectorXd coef;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;
};

/// ADMM for min sum_i rho_{tau_i}(e_i) subject to X* b + e = y*, where rows of
/// X* and y* are the weighted rows of x and y. Residual balancing multiplies
/// or divides the penalty by balance_factor when the primal/dual residual
/// ratio exceeds balance_ratio; it is checked every balance_interval
/// iterations up to balance_stop, after which the penalty stays fixed.
AdmmResult admm_check_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& tau,
                                 const Eigen::VectorXd& weight, const AdmmOptions& options = {});

enum class FactorStepMethod { interior_point, admm };

struct FactorStepOptions {
  FactorStepMethod method = FactorStepMethod::interior_point;
  AdmmOptions admm;
};

/// Stacked design of the factor step: rows (k, i) ordered k-major, each row
/// lambda_{k,i}' with its level tau_k and weight w_k.
struct StackedDesign {
  Eigen::MatrixXd design;  // NK x r
  Eigen::VectorXd tau;
  Eigen::VectorXd weight;
};

StackedDesign stack_loadings(const std::vector<Eigen::MatrixXd>& loadings, const QuantileGrid& grid);

/// f_t = argmin_f sum_k sum_i w_k rho_{tau_k}(x_i - lambda_{k,i}' f).
///
/// Without `fallback`, a rank-deficient stacked design throws NumericalError.
/// With it, coordinates of f in the null space of the design keep the
/// fallback's values and the rest is solved on the range.
Eigen::VectorXd composite_factor_step(const Eigen::VectorXd& x_t, const std::vector<Eigen::MatrixXd>& loadings,
                                      const QuantileGrid& grid, const FactorStepOptions& options = {},
                                      const Eigen::VectorXd* fallback = nullptr);

/// Same as composite_factor_step with a prebuilt stacked design.
Eigen::VectorXd composite_factor_step(const Eigen::VectorXd& x_t, const StackedDesign& stacked,
                                      const FactorStepOptions& options = {},
                                      const Eigen::VectorXd* fallback = nullptr);

double composite_factor_objective(const Eigen::VectorXd& x_t, const std::vector<Eigen::MatrixXd>& loadings,
                                  const QuantileGrid& grid, const Eigen::VectorXd& f);

/// M_NT = (1/NT) sum_k sum_i sum_t w_k rho_{tau_k}(X_it - lambda_{k,i}' f_t).
double composite_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& factors,
                           const std::vector<Eigen::MatrixXd>& loadings, const QuantileGrid& grid);
double composite_objective(const Panel& panel, const Eigen::MatrixXd& factors,
                           const std::vector<Eigen::MatrixXd>& loadings, const QuantileGrid& grid);

}  // namespace dafm
