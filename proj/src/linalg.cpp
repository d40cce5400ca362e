#include "dafm/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dafm/error.hpp"

namespace dafm::linalg {

SortedEigen sorted_symmetric_eigen(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigendecomposition failed");
  }
  // Eigen returns ascending order.
  SortedEigen out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

SymmetricRoot symmetric_root(const Eigen::MatrixXd& a, double max_condition) {
  const SortedEigen eig = sorted_symmetric_eigen(0.5 * (a + a.transpose()));
  const double top = eig.values(0);
  const double bottom = eig.values(eig.values.size() - 1);
  if (!(bottom > 0.0) || !(top > 0.0)) {
    throw NumericalError("matrix square root requires a positive definite matrix");
  }
  SymmetricRoot out;
  out.condition = top / bottom;
  if (out.condition > max_condition) {
    throw NumericalError("matrix is ill-conditioned (condition number " +
                         std::to_string(out.condition) + ")");
  }
  const Eigen::VectorXd s = eig.values.array().sqrt();
  out.root = eig.vectors * s.asDiagonal() * eig.vectors.transpose();
  out.inverse_root = eig.vectors * s.cwiseInverse().asDiagonal() * eig.vectors.transpose();
  return out;
}

LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  LeastSquares out;
  out.coef = cod.solve(y);
  out.residuals = y - x * out.coef;
  out.rank = cod.rank();
  return out;
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& x) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  return cod.rank();
}

}  // namespace dafm::linalg
