#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dafm/estimator.hpp"
#include "dafm/panel.hpp"
#include "dafm/quantile.hpp"

namespace dafm {

enum class RankMethod { ic, eigen };

struct RankSelection {
  RankMethod method = RankMethod::ic;
  int s_max = 0;
  int r_hat = 0;
  bool all_converged = true;

  // Information criterion: entry l-1 belongs to candidate l.
  double penalty = 0.0;
  std::vector<double> objectives;
  std::vector<double> criteria;

  // Eigenvalue method: row k holds the sorted eigenvalues of
  // Lambda_k'Lambda_k/N for the fit with s_max factors.
  Eigen::MatrixXd eigenvalues;
  Eigen::VectorXd thresholds;  // one per level
  Eigen::VectorXi counts;      // eigenvalues above threshold, per level
};

/// min(sqrt N, sqrt T).
double rate_scale(Eigen::Index n, Eigen::Index t);

/// scale * min(sqrt N, sqrt T)^(-2/3). Throws InvalidArgument unless
/// N, T >= 2 and scale > 0.
double default_penalty(Eigen::Index n, Eigen::Index t, double scale);

/// min(8, floor(min(N, T) / 3)), at least 1.
int default_smax(Eigen::Index n, Eigen::Index t);

/// argmin over l = 1..s_max of M(l) + l * penalty, ties to the smaller l.
/// Without a penalty, default_penalty scaled by M(s_max) is used.
RankSelection select_rank_ic(const Panel& panel, const QuantileGrid& grid, int s_max,
                             std::optional<double> penalty, const FitConfig& cfg);

/// max over levels k of the number of eigenvalues of Lambda_k'Lambda_k/N
/// (fit with s_max factors) above kappa(k). Without thresholds,
/// kappa(k) = min(sqrt N, sqrt T)^(-2/3) times the leading eigenvalue of
/// level k. `thresholds` may hold one value for all levels or one per level.
RankSelection select_rank_eigen(const Panel& panel, const QuantileGrid& grid, int s_max,
                                std::optional<Eigen::VectorXd> thresholds, const FitConfig& cfg);

/// Audit CSV: "l,objective,criterion" rows for the IC method, or
/// "k,i,eigenvalue,threshold" rows for the eigenvalue method.
void write_rank_audit(const RankSelection& selection, const std::filesystem::path& path);

}  // namespace dafm
