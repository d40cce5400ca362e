#include "dafm/lp_oracle.hpp"

#include <cmath>
#include <vector>

#include "dafm/error.hpp"
#include "dafm/qr_solver.hpp"

namespace dafm {

Eigen::VectorXd lp_oracle_check_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& tau, const Eigen::VectorXd& weight) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n || tau.size() != n || weight.size() != n) {
    throw InvalidArgument("LP oracle: inconsistent row counts");
  }
  // Columns: b+ (p), b- (p), u (n), v (n).
  const Eigen::Index cols = 2 * p + 2 * n;
  Eigen::MatrixXd tab(n, cols);
  Eigen::VectorXd rhs(n);
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(n));
  tab.setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sign = y(i) < 0.0 ? -1.0 : 1.0;
    tab.block(i, 0, 1, p) = sign * x.row(i);
    tab.block(i, p, 1, p) = -sign * x.row(i);
    tab(i, 2 * p + i) = sign;
    tab(i, 2 * p + n + i) = -sign;
    rhs(i) = sign * y(i);
    basis[static_cast<std::size_t>(i)] = sign > 0 ? 2 * p + i : 2 * p + n + i;
    cost(2 * p + i) = weight(i) * tau(i);
    cost(2 * p + n + i) = weight(i) * (1.0 - tau(i));
  }

  const double eps = 1e-11;
  const long max_pivots = 100000;
  for (long pivot = 0;; ++pivot) {
    if (pivot >= max_pivots) throw NumericalError("LP oracle: pivot limit reached");
    Eigen::VectorXd cb(n);
    for (Eigen::Index i = 0; i < n; ++i) cb(i) = cost(basis[static_cast<std::size_t>(i)]);
    const Eigen::VectorXd reduced = cost - tab.transpose() * cb;
    Eigen::Index entering = -1;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (reduced(j) < -eps) {
        entering = j;
        break;
      }
    }
    if (entering < 0) break;
    Eigen::Index leaving = -1;
    double best_ratio = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (tab(i, entering) > eps) {
        const double ratio = rhs(i) / tab(i, entering);
        if (leaving < 0 || ratio < best_ratio - 1e-14 ||
            (std::abs(ratio - best_ratio) <= 1e-14 &&
             basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leaving)])) {
          leaving = i;
          best_ratio = ratio;
        }
      }
    }
    if (leaving < 0) throw NumericalError("LP oracle: unbounded program");
    const double piv = tab(leaving, entering);
    tab.row(leaving) /= piv;
    rhs(leaving) /= piv;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == leaving) continue;
      const double factor = tab(i, entering);
      if (factor != 0.0) {
        tab.row(i) -= factor * tab.row(leaving);
        rhs(i) -= factor * rhs(leaving);
      }
    }
    basis[static_cast<std::size_t>(leaving)] = entering;
  }

  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = basis[static_cast<std::size_t>(i)];
    if (j < p) b(j) += rhs(i);
    else if (j < 2 * p) b(j - p) -= rhs(i);
  }

  // Re-solve the interpolated rows exactly to remove pivoting round-off.
  const Eigen::VectorXd resid = y - x * b;
  const double tol = 1e-8 * (1.0 + y.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(resid(i)) <= tol) rows.push_back(i);
  }
  if (static_cast<Eigen::Index>(rows.size()) >= p) {
    Eigen::MatrixXd xr(static_cast<Eigen::Index>(rows.size()), p);
    Eigen::VectorXd yr(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      xr.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
      yr(static_cast<Eigen::Index>(r)) = y(rows[r]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xr);
    if (qr.rank() == p) {
      const Eigen::VectorXd refined = qr.solve(yr);
      if (check_regression_objective(x, y, tau, weight, refined) <=
          check_regression_objective(x, y, tau, weight, b)) {
        b = refined;
      }
    }
  }
  return b;
}

Eigen::VectorXd lp_oracle_quantile(const Eigen::VectorXd& y, const Eigen::MatrixXd& z, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("quantile level must lie in (0, 1)");
  if (z.rows() != y.size()) throw InvalidArgument("LP oracle: y and Z differ in length");
  if (z.rows() < z.cols()) throw InvalidArgument("LP oracle: T < r");
  const Eigen::Index n = y.size();
  return lp_oracle_check_regression(z, y, Eigen::VectorXd::Constant(n, tau), Eigen::VectorXd::Ones(n));
}

}  // namespace dafm
