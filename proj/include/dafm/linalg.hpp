#pragma once

#include <Eigen/Dense>

namespace dafm::linalg {

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order (columns of `vectors` follow the same order).
struct SortedEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

SortedEigen sorted_symmetric_eigen(const Eigen::MatrixXd& a);

/// Symmetric square root S = A^{1/2} and its inverse for a symmetric
/// positive definite matrix.
struct SymmetricRoot {
  Eigen::MatrixXd root;
  Eigen::MatrixXd inverse_root;
  double condition = 0.0;  // ratio of extreme eigenvalues of A
};

/// Throws NumericalError when A is not positive definite or its condition
/// number exceeds max_condition.
SymmetricRoot symmetric_root(const Eigen::MatrixXd& a, double max_condition = 1e12);

/// Least squares via complete orthogonal decomposition (minimum-norm
/// solution when X is rank deficient).
struct LeastSquares {
  Eigen::VectorXd coef;
  Eigen::VectorXd residuals;
  Eigen::Index rank = 0;
};

LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Numerical rank using the same relative threshold as least_squares.
Eigen::Index numerical_rank(const Eigen::MatrixXd& x);

}  // namespace dafm::linalg
