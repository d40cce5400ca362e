#include <algorithm>
#include <cmath>

#include "dafm/error.hpp"
#include "dafm/qr_solver.hpp"
#include "qr_detail.hpp"

namespace dafm {

AdmmResult admm_check_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& tau,
                                 const Eigen::VectorXd& weight, const AdmmOptions& options) {
  if (x.rows() != y.size() || tau.size() != y.size() || weight.size() != y.size()) {
    throw InvalidArgument("ADMM: inconsistent row counts");
  }
  if (!(options.penalty > 0.0) || !(options.tolerance > 0.0) || options.max_iterations < 1 ||
      options.balance_interval < 1) {
    throw InvalidArgument("ADMM: penalty, tolerance, iteration cap and balance interval must be positive");
  }
  const Eigen::MatrixXd xs = x.array().colwise() * weight.array();
  const Eigen::VectorXd ys = y.cwiseProduct(weight);
  const Eigen::Index n = xs.rows();

  Eigen::LLT<Eigen::MatrixXd> gram(xs.transpose() * xs);
  if (gram.info() != Eigen::Success) throw NumericalError("ADMM: design is rank deficient");

  double sigma = options.penalty;
  Eigen::VectorXd b = gram.solve(xs.transpose() * ys);
  Eigen::VectorXd fitted = xs * b;
  Eigen::VectorXd e = ys - fitted;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);  // scaled dual variable

  AdmmResult result;
  for (int it = 1; it <= options.max_iterations; ++it) {
    b = gram.solve(xs.transpose() * (ys - e - u));
    fitted = xs * b;
    const Eigen::VectorXd e_old = e;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = ys(i) - fitted(i) - u(i);
      const double upper = tau(i) / sigma;
      const double lower = (1.0 - tau(i)) / sigma;
      e(i) = v > upper ? v - upper : (v < -lower ? v + lower : 0.0);
    }
    const Eigen::VectorXd primal = fitted + e - ys;
    u += primal;
    const double primal_norm = primal.cwiseAbs().maxCoeff();
    const double dual_norm = sigma * (xs.transpose() * (e - e_old)).cwiseAbs().maxCoeff();
    result.iterations = it;
    result.primal_residual = primal_norm;
    result.dual_residual = dual_norm;
    if (std::max(primal_norm, dual_norm) <= options.tolerance) {
      result.converged = true;
      break;
    }
    if (it % options.balance_interval != 0 || it > options.balance_stop) continue;
    double next = sigma;
    if (primal_norm > options.balance_ratio * dual_norm) {
      next = sigma * options.balance_factor;
    } else if (dual_norm > options.balance_ratio * primal_norm) {
      next = sigma / options.balance_factor;
    }
    if (next != sigma) {
      u *= sigma / next;
      sigma = next;
    }
  }
  result.coef = b;
  if (options.polish) result.coef = detail::polish_basic_solution(xs, ys, tau, b);
  return result;
}

}  // namespace dafm
