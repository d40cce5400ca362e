#include "dafm/rank_select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "dafm/error.hpp"
#include "dafm/linalg.hpp"
#include "dafm/log.hpp"

namespace dafm {
namespace {

void check_smax(const Panel& panel, int s_max) {
  if (s_max < 1) throw InvalidArgument("s_max must be at least 1");
  if (s_max >= std::min(panel.series(), panel.periods())) {
    throw InvalidArgument("s_max must be below min(N, T)");
  }
}

}  // namespace

double rate_scale(Eigen::Index n, Eigen::Index t) {
  return std::min(std::sqrt(static_cast<double>(n)), std::sqrt(static_cast<double>(t)));
}

double default_penalty(Eigen::Index n, Eigen::Index t, double scale) {
  if (n < 2 || t < 2) throw InvalidArgument("default penalty needs N, T >= 2");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("penalty scale must be positive and finite");
  return scale * std::pow(rate_scale(n, t), -2.0 / 3.0);
}

int default_smax(Eigen::Index n, Eigen::Index t) {
  const Eigen::Index third = std::min(n, t) / 3;
  return static_cast<int>(std::max<Eigen::Index>(1, std::min<Eigen::Index>(8, third)));
}

RankSelection select_rank_ic(const Panel& panel, const QuantileGrid& grid, int s_max,
                             std::optional<double> penalty, const FitConfig& cfg) {
  check_smax(panel, s_max);
  if (penalty && !(*penalty > 0.0)) throw InvalidArgument("penalty must be positive");
  RankSelection out;
  out.method = RankMethod::ic;
  out.s_max = s_max;
  for (int l = 1; l <= s_max; ++l) {
    FitConfig c = cfg;
    c.r = l;
    c.initial_factors.reset();
    const FactorFit fit = fit_dafm(panel, grid, c);
    if (!fit.converged) {
      out.all_converged = false;
      log_warning("rank selection: candidate l=" + std::to_string(l) + " did not converge; using its last iterate");
    }
    out.objectives.push_back(fit.objective_trace.back());
  }
  if (penalty) {
    out.penalty = *penalty;
  } else {
    // Scale by the residual loss of the largest model, floored for exact fits.
    const double scale = std::max(out.objectives.back(), 1e-12 * out.objectives.front());
    if (!(scale > 0.0)) throw NumericalError("objective is zero for every candidate; supply a penalty explicitly");
    out.penalty = default_penalty(panel.series(), panel.periods(), scale);
  }
  double best = 0.0;
  for (int l = 1; l <= s_max; ++l) {
    const double value = out.objectives[static_cast<std::size_t>(l - 1)] + l * out.penalty;
    out.criteria.push_back(value);
    if (l == 1 || value < best) {
      best = value;
      out.r_hat = l;
    }
  }
  return out;
}

RankSelection select_rank_eigen(const Panel& panel, const QuantileGrid& grid, int s_max,
                                std::optional<Eigen::VectorXd> thresholds, const FitConfig& cfg) {
  check_smax(panel, s_max);
  const Eigen::Index K = static_cast<Eigen::Index>(grid.size());
  if (thresholds && thresholds->size() != 1 && thresholds->size() != K) {
    throw InvalidArgument("thresholds must hold one value or one value per quantile level");
  }
  FitConfig c = cfg;
  c.r = s_max;
  c.initial_factors.reset();
  const FactorFit fit = fit_dafm(panel, grid, c);

  RankSelection out;
  out.method = RankMethod::eigen;
  out.s_max = s_max;
  out.all_converged = fit.converged;
  if (!fit.converged) log_warning("rank selection: fit with s_max factors did not converge; using its last iterate");
  out.eigenvalues.resize(K, s_max);
  out.thresholds.resize(K);
  out.counts.resize(K);
  const double n = static_cast<double>(panel.series());
  const double shrink = std::pow(rate_scale(panel.series(), panel.periods()), -2.0 / 3.0);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::MatrixXd& l = fit.loadings[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd m = l.transpose() * l / n;
    out.eigenvalues.row(k) = linalg::sorted_symmetric_eigen(0.5 * (m + m.transpose())).values.transpose();
    if (thresholds) {
      out.thresholds(k) = thresholds->size() == 1 ? (*thresholds)(0) : (*thresholds)(k);
    } else {
      out.thresholds(k) = shrink * out.eigenvalues(k, 0);
    }
    out.counts(k) = static_cast<int>((out.eigenvalues.row(k).array() > out.thresholds(k)).count());
  }
  out.r_hat = out.counts.maxCoeff();
  if (out.r_hat == 0) throw InvalidArgument("threshold exceeds leading eigenvalue at every quantile level");
  return out;
}

void write_rank_audit(const RankSelection& s, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path.string());
  if (s.method == RankMethod::ic) {
    out << "l,objective,criterion\n";
    for (std::size_t j = 0; j < s.criteria.size(); ++j) {
      out << j + 1 << ',' << format_double(s.objectives[j]) << ',' << format_double(s.criteria[j]) << '\n';
    }
  } else {
    out << "k,i,eigenvalue,threshold\n";
    for (Eigen::Index k = 0; k < s.eigenvalues.rows(); ++k) {
      for (Eigen::Index i = 0; i < s.eigenvalues.cols(); ++i) {
        out << k + 1 << ',' << i + 1 << ',' << format_double(s.eigenvalues(k, i)) << ','
            << format_double(s.thresholds(k)) << '\n';
      }
    }
  }
}

}  // namespace dafm
