#include <cmath>
#include <string>

#include "dafm/error.hpp"
#include "dafm/estimator.hpp"
#include "dafm/linalg.hpp"

namespace dafm {

NormalizedFactors normalize_fit(const Eigen::MatrixXd& factors, const std::vector<Eigen::MatrixXd>& loadings,
                                std::size_t k_star) {
  if (loadings.empty()) throw InvalidArgument("normalize_fit: no loading matrices");
  if (k_star < 1 || k_star > loadings.size()) {
    throw InvalidArgument("normalize_fit: k_star " + std::to_string(k_star) + " outside 1.." +
                          std::to_string(loadings.size()));
  }
  const Eigen::Index T = factors.rows();
  const Eigen::Index r = factors.cols();
  for (const auto& l : loadings) {
    if (l.cols() != r) throw InvalidArgument("normalize_fit: loading and factor widths differ");
  }
  const Eigen::MatrixXd& anchor = loadings[k_star - 1];
  const double n = static_cast<double>(anchor.rows());

  const linalg::SymmetricRoot root = linalg::symmetric_root(factors.transpose() * factors / static_cast<double>(T));
  const Eigen::MatrixXd inner = root.root * (anchor.transpose() * anchor / n) * root.root;
  const linalg::SortedEigen eig = linalg::sorted_symmetric_eigen(0.5 * (inner + inner.transpose()));

  NormalizedFactors out;
  out.report.U = eig.vectors;
  out.report.D = eig.values;
  out.report.k_star = k_star;
  out.report.H = root.inverse_root * eig.vectors;
  out.F = factors * out.report.H;
  // (H^{-1})' = (U' S)' = S U for orthogonal U and symmetric S.
  const Eigen::MatrixXd back = root.root * eig.vectors;

  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::Index at = 0;
    out.F.col(j).cwiseAbs().maxCoeff(&at);
    if (out.F(at, j) < 0.0) {
      out.F.col(j) *= -1.0;
      out.report.H.col(j) *= -1.0;
      out.report.U.col(j) *= -1.0;
    }
  }
  Eigen::MatrixXd signed_back = back;
  for (Eigen::Index j = 0; j < r; ++j) {
    if (out.report.U.col(j).dot(eig.vectors.col(j)) < 0.0) signed_back.col(j) *= -1.0;
  }
  out.loadings.reserve(loadings.size());
  for (const auto& l : loadings) out.loadings.push_back(l * signed_back);
  return out;
}

}  // namespace dafm
