#include "dafm/eval.hpp"

#include <cmath>
#include <map>

#include "dafm/error.hpp"
#include "dafm/linalg.hpp"
#include "dafm/log.hpp"

namespace dafm {

double adjusted_r2(const Eigen::VectorXd& true_factor, const Eigen::MatrixXd& estimated) {
  const Eigen::Index T = true_factor.size();
  const Eigen::Index r = estimated.cols();
  if (estimated.rows() != T) throw InvalidArgument("adjusted_r2: factor lengths differ");
  if (T <= r + 1) throw InvalidArgument("adjusted_r2 requires T > r + 1");
  Eigen::MatrixXd design(T, r + 1);
  design.col(0).setOnes();
  design.rightCols(r) = estimated;
  const linalg::LeastSquares ls = linalg::least_squares(design, true_factor);
  if (ls.rank < r + 1) log_warning("adjusted_r2: estimated factors are collinear; using a minimum-norm fit");
  const double tss = (true_factor.array() - true_factor.mean()).square().sum();
  if (!(tss > 0.0)) throw InvalidArgument("adjusted_r2: true factor is constant");
  const double r2 = 1.0 - ls.residuals.squaredNorm() / tss;
  return 1.0 - (1.0 - r2) * static_cast<double>(T - 1) / static_cast<double>(T - r - 1);
}

Eigen::VectorXd adjusted_r2_all(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimated) {
  Eigen::VectorXd out(truth.cols());
  for (Eigen::Index j = 0; j < truth.cols(); ++j) out(j) = adjusted_r2(truth.col(j), estimated);
  return out;
}

Eigen::VectorXd sign_align(const Eigen::MatrixXd& f_hat, const Eigen::MatrixXd& f0) {
  if (f_hat.rows() != f0.rows() || f_hat.cols() != f0.cols()) throw InvalidArgument("sign_align: shapes differ");
  Eigen::VectorXd s(f_hat.cols());
  for (Eigen::Index j = 0; j < f_hat.cols(); ++j) s(j) = f_hat.col(j).dot(f0.col(j)) < 0.0 ? -1.0 : 1.0;
  return s;
}

CivSeries civ(const Panel& residuals, const std::vector<std::string>& period_of_row) {
  const Eigen::MatrixXd& e = residuals.values();
  if (static_cast<Eigen::Index>(period_of_row.size()) != e.rows()) {
    throw InvalidArgument("civ: one period label per time row is required");
  }
  CivSeries out;
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<Eigen::Index>> rows;
  for (Eigen::Index t = 0; t < e.rows(); ++t) {
    const auto& label = period_of_row[static_cast<std::size_t>(t)];
    auto [it, inserted] = slot.emplace(label, out.periods.size());
    if (inserted) {
      out.periods.push_back(label);
      rows.emplace_back();
    }
    rows[it->second].push_back(t);
  }
  out.values.resize(static_cast<Eigen::Index>(out.periods.size()));
  for (std::size_t p = 0; p < rows.size(); ++p) {
    const auto& idx = rows[p];
    if (idx.size() < 2) throw DataError("civ: period '" + out.periods[p] + "' has fewer than two observations");
    double total = 0.0;
    for (Eigen::Index i = 0; i < e.cols(); ++i) {
      double mean = 0.0;
      for (Eigen::Index t : idx) mean += e(t, i);
      mean /= static_cast<double>(idx.size());
      double ss = 0.0;
      for (Eigen::Index t : idx) ss += (e(t, i) - mean) * (e(t, i) - mean);
      total += std::sqrt(ss / static_cast<double>(idx.size() - 1));
    }
    out.values(static_cast<Eigen::Index>(p)) = total / static_cast<double>(e.cols());
  }
  return out;
}

double relative_mse(const Eigen::VectorXd& forecasts, const Eigen::VectorXd& actuals,
                    const Eigen::VectorXd& baseline_forecasts) {
  if (forecasts.size() < 1 || forecasts.size() != actuals.size() || baseline_forecasts.size() != actuals.size()) {
    throw InvalidArgument("relative_mse: inputs must have equal positive length");
  }
  const double base = (baseline_forecasts - actuals).squaredNorm();
  if (!(base > 0.0)) throw InvalidArgument("relative_mse: baseline MSE is zero");
  return (forecasts - actuals).squaredNorm() / base;
}

}  // namespace dafm
