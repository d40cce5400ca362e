#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "dafm/estimator.hpp"
#include "dafm/panel.hpp"
#include "dafm/quantile.hpp"

namespace dafm {

/// S_NT = (1/NT) sum_k w_k sum_{i,t} smoothed_check_loss(X_it - lambda_ki' f_t).
double smoothed_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& factors,
                          const std::vector<Eigen::MatrixXd>& loadings, const QuantileGrid& grid,
                          const SmoothConfig& scfg);

struct SmoothedGradient {
  Eigen::MatrixXd factors;                // T x r
  std::vector<Eigen::MatrixXd> loadings;  // K matrices N x r
};

/// Gradient of smoothed_objective with respect to every factor and loading.
SmoothedGradient smoothed_objective_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& factors,
                                             const std::vector<Eigen::MatrixXd>& loadings,
                                             const QuantileGrid& grid, const SmoothConfig& scfg);

/// Minimizes sum_j weight_j smoothed_check_loss(y_j - x_j' b) from `start` by
/// damped Newton steps (eigenvalue-floored Hessian, Armijo backtracking).
/// Throws NumericalError when no descent step exists at a point whose
/// gradient is not negligible.
Eigen::VectorXd smoothed_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& tau,
                                    const Eigen::VectorXd& weight, const SmoothConfig& scfg,
                                    const Eigen::VectorXd& start);

/// Alternating minimization of S_NT, started from the unsmoothed fit
/// (fit_dafm with the same configuration). objective_trace holds S_NT.
FactorFit fit_smoothed_dafm(const Panel& panel, const QuantileGrid& grid, const FitConfig& cfg,
                            const SmoothConfig& scfg);

/// Bandwidth for the density plug-ins: multiplier * robust residual scale *
/// scfg.bandwidth, keeping the rate of scfg. The scale is the normalized MAD
/// of the residuals at the median level; zero scale keeps scfg unchanged.
SmoothConfig inference_config(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg,
                              double multiplier = 6.0);

/// Density-weighted second moments, with densities estimated by the second
/// derivative of the smoothed loss at the fitted residuals.
struct PlugIn {
  Eigen::MatrixXd matrix;
  bool positive_definite = true;  // smallest eigenvalue >= 1e-10
};

/// Psi_t = (1/N) sum_k w_k sum_i d_kit lambda_ki lambda_ki', one per t.
std::vector<PlugIn> plug_in_psi(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg);
PlugIn plug_in_psi_at(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg, Eigen::Index t);

/// Phi_ki = (1/T) sum_t d_kit f_t f_t' for 0-based level k and series i.
PlugIn plug_in_phi(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg, std::size_t k,
                   Eigen::Index i);

/// Entry (k, k') = min(tau_k, tau_k') (1 - max(tau_k, tau_k')).
Eigen::MatrixXd quantile_covariance_kernel(const QuantileGrid& grid);

/// Sigma_kk' = Lambda_k' Lambda_k' / N, stored at index k * K + k'.
std::vector<Eigen::MatrixXd> cross_loading_moments(const std::vector<Eigen::MatrixXd>& loadings);

/// Sandwich covariance of f_t: Psi^-1 [sum_kk' w_k w_k' c_kk' Sigma_kk'] Psi^-1 / N.
/// Eigenvalues of Psi below 1e-8 (but positive) are raised to 1e-8; a
/// non-positive-definite Psi throws NumericalError.
Eigen::MatrixXd factor_covariance(const Eigen::MatrixXd& psi, const std::vector<Eigen::MatrixXd>& loadings,
                                  const QuantileGrid& grid);

/// tau (1 - tau) Phi^-2 / T, with the same eigenvalue handling.
Eigen::MatrixXd loading_covariance(const Eigen::MatrixXd& phi, double tau, Eigen::Index periods);

struct ConfidenceIntervals {
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd covariance;
  double level = 0.95;
};

/// Symmetric normal intervals estimate +- z sqrt(diag(cov)). Both warn when
/// max(N, T) / min(N, T) > 3.
ConfidenceIntervals factor_ci(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg, Eigen::Index t,
                              double level);
ConfidenceIntervals loading_ci(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg, std::size_t k,
                               Eigen::Index i, double level);

/// Every plug-in and covariance of a fit.
struct AsymptoticCov {
  std::vector<PlugIn> psi_t;                 // T entries
  std::vector<PlugIn> phi_ki;                // K * N entries, index k * N + i
  std::vector<Eigen::MatrixXd> sigma_kk;     // K * K entries
  std::vector<Eigen::MatrixXd> factor_cov_t;
  std::vector<Eigen::MatrixXd> loading_cov_ki;
};

AsymptoticCov asymptotic_covariances(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg);

/// Largest entrywise deviation between H' cov(f_t) H computed from the fit
/// and cov(f_t) recomputed after rotating the fit by H (F H, Lambda H^-T),
/// relative to the covariance scale. Logs a warning above 1e-6.
double rotation_equivariance_gap(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg,
                                 const Eigen::MatrixXd& rotation, Eigen::Index t);

}  // namespace dafm
