#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dafm/panel.hpp"
#include "dafm/qr_solver.hpp"
#include "dafm/quantile.hpp"

namespace dafm {

enum class InitMethod { pca, random_orthonormal };

struct FitConfig {
  int r = 1;
  double tol = 1e-6;  // relative objective change
  int max_outer = 100;
  InitMethod init = InitMethod::pca;
  std::uint64_t seed = 0;
  /// Number of starts. The first uses `init`, the rest are random-orthonormal
  /// with seeds derived from `seed`; the fit with the lowest final objective
  /// is kept. Ignored when initial_factors is set.
  int starts = 3;
  std::size_t k_star = 0;  // 1-based; 0 selects the level closest to 0.5
  FactorStepOptions factor_step;
  std::size_t jobs = 1;  // 0 uses every hardware thread
  double divergence_bound = 1e8;
  /// Starting factors (T x r), overriding `init`.
  std::optional<Eigen::MatrixXd> initial_factors;
};

/// Rotation applied by normalize_fit: F_new = F H, Lambda_new = Lambda H^{-T}.
struct NormalizationReport {
  Eigen::MatrixXd H;
  Eigen::MatrixXd U;
  Eigen::VectorXd D;  // diagonal, non-increasing
  std::size_t k_star = 0;
};

struct FactorFit {
  Eigen::MatrixXd F;                     // T x r
  std::vector<Eigen::MatrixXd> loadings;  // K matrices N x r
  QuantileGrid grid = QuantileGrid::standard();
  std::vector<double> objective_trace;  // one value per outer iteration
  bool converged = false;
  NormalizationReport normalization;

  int r() const { return static_cast<int>(F.cols()); }
  /// Lambda_k F' for 0-based k, an N x T matrix.
  Eigen::MatrixXd common_component(std::size_t k) const;
};

struct NormalizedFactors {
  Eigen::MatrixXd F;
  std::vector<Eigen::MatrixXd> loadings;
  NormalizationReport report;
};

/// Rotates (F, Lambda_1..K) so that F'F/T = I and Lambda_k'Lambda_k/N is
/// diagonal with non-increasing entries for the 1-based index k_star. Each
/// factor column is then signed so that its largest-magnitude entry is
/// positive. Throws NumericalError when F'F/T is not safely invertible.
NormalizedFactors normalize_fit(const Eigen::MatrixXd& factors, const std::vector<Eigen::MatrixXd>& loadings,
                                std::size_t k_star);

/// Alternating minimization of the composite quantile objective, best of
/// cfg.starts runs.
FactorFit fit_dafm(const Panel& panel, const QuantileGrid& grid, const FitConfig& cfg);

/// Single quantile factor model: fit_dafm on the grid {tau} with unit weight.
FactorFit fit_qfm(const Panel& panel, double tau, const FitConfig& cfg);
FactorFit fit_qfm(const Panel& panel, double tau, int r, FitConfig cfg);

struct PcaResult {
  Eigen::MatrixXd F;       // T x r, F'F/T = I
  Eigen::MatrixXd loadings;  // N x r, X'F/T
  Eigen::VectorXd singular_values;  // all singular values of X
};

/// Principal components of the raw panel (no centering or scaling).
PcaResult mean_pca(const Panel& panel, int r);

/// Starting factors for the alternating loop.
Eigen::MatrixXd initial_factors(const Panel& panel, const FitConfig& cfg);

}  // namespace dafm
