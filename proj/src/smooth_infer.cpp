#include "dafm/smooth_infer.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "dafm/error.hpp"
#include "dafm/linalg.hpp"
#include "dafm/log.hpp"
#include "dafm/parallel.hpp"

namespace dafm {
namespace {

constexpr int kMaxNewton = 100;
constexpr double kArmijo = 1e-4;
constexpr double kEigenFloor = 1e-8;

double weighted_smoothed_sum(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& tau,
                             const Eigen::VectorXd& weight, const SmoothConfig& scfg, const Eigen::VectorXd& b) {
  const Eigen::VectorXd r = y - x * b;
  double total = 0.0;
  for (Eigen::Index j = 0; j < r.size(); ++j) total += weight(j) * smoothed_check_loss(r(j), tau(j), scfg);
  return total;
}

Eigen::MatrixXd invert_floored(const Eigen::MatrixXd& m, const char* what) {
  const linalg::SortedEigen eig = linalg::sorted_symmetric_eigen(0.5 * (m + m.transpose()));
  const double smallest = eig.values(eig.values.size() - 1);
  if (!(smallest > 0.0)) {
    throw NumericalError(std::string(what) + " is not positive definite (smallest eigenvalue " +
                         std::to_string(smallest) + ")");
  }
  const Eigen::VectorXd inv = eig.values.cwiseMax(kEigenFloor).cwiseInverse();
  return eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
}

void warn_regime(const Panel& panel) {
  const double n = static_cast<double>(panel.series());
  const double t = static_cast<double>(panel.periods());
  if (std::max(n, t) / std::min(n, t) > 3.0) {
    log_warning("N and T differ by more than a factor of 3; the normal approximation assumes N ~ T");
  }
}

double density_at(double residual, const SmoothConfig& scfg) {
  return smoothed_check_second_derivative(residual, scfg);
}

ConfidenceIntervals make_intervals(const Eigen::VectorXd& estimate, const Eigen::MatrixXd& cov, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal_distribution<>(), 0.5 + 0.5 * level);
  ConfidenceIntervals ci;
  ci.estimate = estimate;
  ci.covariance = cov;
  ci.level = level;
  const Eigen::VectorXd half = z * cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  ci.lower = estimate - half;
  ci.upper = estimate + half;
  return ci;
}

}  // namespace

double smoothed_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& factors,
                          const std::vector<Eigen::MatrixXd>& loadings, const QuantileGrid& grid,
                          const SmoothConfig& scfg) {
  if (loadings.size() != grid.size()) throw InvalidArgument("one loading matrix per quantile level is required");
  double total = 0.0;
  for (std::size_t k = 0; k < loadings.size(); ++k) {
    const Eigen::MatrixXd resid = x - factors * loadings[k].transpose();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < resid.size(); ++j) sum += smoothed_check_loss(resid.data()[j], grid.level(k), scfg);
    total += grid.weight(k) * sum;
  }
  return total / static_cast<double>(x.rows() * x.cols());
}

SmoothedGradient smoothed_objective_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& factors,
                                             const std::vector<Eigen::MatrixXd>& loadings,
                                             const QuantileGrid& grid, const SmoothConfig& scfg) {
  if (loadings.size() != grid.size()) throw InvalidArgument("one loading matrix per quantile level is required");
  const double scale = 1.0 / static_cast<double>(x.rows() * x.cols());
  SmoothedGradient g;
  g.factors = Eigen::MatrixXd::Zero(factors.rows(), factors.cols());
  for (std::size_t k = 0; k < loadings.size(); ++k) {
    const Eigen::MatrixXd resid = x - factors * loadings[k].transpose();  // T x N
    Eigen::MatrixXd d(resid.rows(), resid.cols());
    for (Eigen::Index j = 0; j < resid.size(); ++j) {
      d.data()[j] = -grid.weight(k) * scale * smoothed_check_derivative(resid.data()[j], grid.level(k), scfg);
    }
    g.factors += d * loadings[k];
    g.loadings.push_back(d.transpose() * factors);
  }
  return g;
}

Eigen::VectorXd smoothed_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& tau,
                                    const Eigen::VectorXd& weight, const SmoothConfig& scfg,
                                    const Eigen::VectorXd& start) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  Eigen::VectorXd b = start;
  double value = weighted_smoothed_sum(x, y, tau, weight, scfg, b);
  const double gram_scale = (x.array().square().colwise() * weight.array()).sum() / static_cast<double>(p);
  const double grad_tol = 1e-10 * (1.0 + std::sqrt(gram_scale * static_cast<double>(n)));

  for (int it = 0; it < kMaxNewton; ++it) {
    const Eigen::VectorXd r = y - x * b;
    Eigen::VectorXd d1(n);
    Eigen::VectorXd d2(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      d1(j) = weight(j) * smoothed_check_derivative(r(j), tau(j), scfg);
      d2(j) = weight(j) * smoothed_check_second_derivative(r(j), scfg);
    }
    const Eigen::VectorXd grad = -x.transpose() * d1;
    if (grad.cwiseAbs().maxCoeff() <= grad_tol) break;
    const Eigen::MatrixXd hess = x.transpose() * (x.array().colwise() * d2.array()).matrix();
    const linalg::SortedEigen eig = linalg::sorted_symmetric_eigen(0.5 * (hess + hess.transpose()));
    const double floor = std::max(1e-8 * std::abs(eig.values(0)), 1e-12 * gram_scale / scfg.bandwidth);
    const Eigen::VectorXd inv = eig.values.cwiseMax(floor).cwiseInverse();
    Eigen::VectorXd step = -(eig.vectors * (inv.asDiagonal() * (eig.vectors.transpose() * grad)));

    bool moved = false;
    for (int attempt = 0; attempt < 2 && !moved; ++attempt) {
      if (attempt == 1) step = -grad / std::max(eig.values(0), floor);  // steepest descent fallback
      const double slope = grad.dot(step);
      double alpha = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd trial = b + alpha * step;
        const double v = weighted_smoothed_sum(x, y, tau, weight, scfg, trial);
        if (v <= value + kArmijo * alpha * slope) {
          moved = v < value;
          b = trial;
          value = v;
          break;
        }
        alpha *= 0.5;
      }
    }
    if (!moved) {
      // No decrease even at tiny steps: either round-off level or a genuine failure.
      if (grad.cwiseAbs().maxCoeff() > 1e-6 * (1.0 + std::abs(value))) {
        throw NumericalError("smoothed line search failed (gradient norm " +
                             std::to_string(grad.cwiseAbs().maxCoeff()) + ")");
      }
      break;
    }
  }
  return b;
}

FactorFit fit_smoothed_dafm(const Panel& panel, const QuantileGrid& grid, const FitConfig& cfg,
                            const SmoothConfig& scfg) {
  if (!(scfg.bandwidth > 0.0)) throw InvalidArgument("bandwidth must be positive");
  const FactorFit start = fit_dafm(panel, grid, cfg);
  const Eigen::MatrixXd& x = panel.values();
  const Eigen::Index T = x.rows();
  const Eigen::Index N = x.cols();
  const std::size_t K = grid.size();
  const std::size_t k_star = cfg.k_star == 0 ? grid.median_index() : cfg.k_star;

  Eigen::MatrixXd F = start.F;
  std::vector<Eigen::MatrixXd> loadings = start.loadings;
  const StackedDesign base = stack_loadings(loadings, grid);

  FactorFit fit;
  fit.grid = grid;
  double previous = smoothed_objective(x, F, loadings, grid, scfg);
  for (int iter = 1; iter <= cfg.max_outer; ++iter) {
    parallel_for(K * static_cast<std::size_t>(N), cfg.jobs, [&](std::size_t idx) {
      const std::size_t k = idx / static_cast<std::size_t>(N);
      const Eigen::Index i = static_cast<Eigen::Index>(idx % static_cast<std::size_t>(N));
      try {
        const Eigen::VectorXd l = smoothed_regression(F, x.col(i), Eigen::VectorXd::Constant(T, grid.level(k)),
                                                      Eigen::VectorXd::Ones(T), scfg,
                                                      loadings[k].row(i).transpose());
        loadings[k].row(i) = l.transpose();
      } catch (const NumericalError& e) {
        throw NumericalError("outer iteration " + std::to_string(iter) + ", loading (k=" + std::to_string(k + 1) +
                             ", i=" + std::to_string(i + 1) + "): " + e.what());
      }
    });
    StackedDesign stacked = base;
    for (std::size_t k = 0; k < K; ++k) stacked.design.middleRows(static_cast<Eigen::Index>(k) * N, N) = loadings[k];
    parallel_for(static_cast<std::size_t>(T), cfg.jobs, [&](std::size_t tt) {
      const Eigen::Index t = static_cast<Eigen::Index>(tt);
      Eigen::VectorXd response(N * static_cast<Eigen::Index>(K));
      for (std::size_t k = 0; k < K; ++k) response.segment(static_cast<Eigen::Index>(k) * N, N) = x.row(t).transpose();
      try {
        const Eigen::VectorXd f = smoothed_regression(stacked.design, response, stacked.tau, stacked.weight, scfg,
                                                      F.row(t).transpose());
        F.row(t) = f.transpose();
      } catch (const NumericalError& e) {
        throw NumericalError("outer iteration " + std::to_string(iter) + ", factor t=" + std::to_string(t + 1) +
                             ": " + e.what());
      }
    });
    const double max_norm = F.rowwise().norm().maxCoeff();
    if (!(max_norm <= cfg.divergence_bound)) {
      throw NumericalError("outer iteration " + std::to_string(iter) + ": factor norm exceeds the divergence bound");
    }
    const double objective = smoothed_objective(x, F, loadings, grid, scfg);
    fit.objective_trace.push_back(objective);

    const auto root = linalg::symmetric_root(F.transpose() * F / static_cast<double>(T));
    F = F * root.inverse_root;
    for (auto& l : loadings) l = l * root.root;

    const double denom = std::max(std::abs(previous), 1e-12);
    if (std::abs(objective - previous) / denom < cfg.tol) {
      fit.converged = true;
      break;
    }
    previous = objective;
  }
  NormalizedFactors norm = normalize_fit(F, loadings, k_star);
  fit.F = std::move(norm.F);
  fit.loadings = std::move(norm.loadings);
  fit.normalization = std::move(norm.report);
  return fit;
}

SmoothConfig inference_config(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg,
                              double multiplier) {
  if (!(multiplier > 0.0)) throw InvalidArgument("bandwidth multiplier must be positive");
  const std::size_t k = fit.grid.median_index() - 1;
  const Eigen::MatrixXd resid = panel.values() - fit.F * fit.loadings.at(k).transpose();
  std::vector<double> v(resid.data(), resid.data() + resid.size());
  const auto median_of = [](std::vector<double>& a) {
    const auto mid = a.begin() + static_cast<std::ptrdiff_t>(a.size() / 2);
    std::nth_element(a.begin(), mid, a.end());
    double m = *mid;
    if (a.size() % 2 == 0) m = 0.5 * (m + *std::max_element(a.begin(), mid));
    return m;
  };
  const double center = median_of(v);
  for (double& e : v) e = std::abs(e - center);
  const double scale = 1.482602218505602 * median_of(v);
  if (!(scale > 0.0)) return scfg;
  SmoothConfig out = scfg;
  out.bandwidth = multiplier * scale * scfg.bandwidth;
  return out;
}

PlugIn plug_in_psi_at(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg, Eigen::Index t) {
  const Eigen::MatrixXd& x = panel.values();
  if (t < 0 || t >= x.rows()) throw InvalidArgument("time index out of range");
  const Eigen::Index r = fit.F.cols();
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(r, r);
  const Eigen::VectorXd f = fit.F.row(t).transpose();
  for (std::size_t k = 0; k < fit.loadings.size(); ++k) {
    const Eigen::MatrixXd& l = fit.loadings[k];
    const Eigen::VectorXd resid = x.row(t).transpose() - l * f;
    Eigen::VectorXd d(resid.size());
    for (Eigen::Index i = 0; i < resid.size(); ++i) d(i) = fit.grid.weight(k) * density_at(resid(i), scfg);
    psi += l.transpose() * (l.array().colwise() * d.array()).matrix();
  }
  psi /= static_cast<double>(x.cols());
  PlugIn out;
  out.matrix = 0.5 * (psi + psi.transpose());
  out.positive_definite = linalg::sorted_symmetric_eigen(out.matrix).values.minCoeff() >= 1e-10;
  return out;
}

std::vector<PlugIn> plug_in_psi(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg) {
  std::vector<PlugIn> out;
  out.reserve(static_cast<std::size_t>(panel.periods()));
  for (Eigen::Index t = 0; t < panel.periods(); ++t) out.push_back(plug_in_psi_at(fit, panel, scfg, t));
  return out;
}

PlugIn plug_in_phi(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg, std::size_t k,
                   Eigen::Index i) {
  const Eigen::MatrixXd& x = panel.values();
  if (k >= fit.loadings.size()) throw InvalidArgument("quantile index out of range");
  if (i < 0 || i >= x.cols()) throw InvalidArgument("series index out of range");
  const Eigen::VectorXd resid = x.col(i) - fit.F * fit.loadings[k].row(i).transpose();
  Eigen::VectorXd d(resid.size());
  for (Eigen::Index t = 0; t < resid.size(); ++t) d(t) = density_at(resid(t), scfg);
  Eigen::MatrixXd phi = fit.F.transpose() * (fit.F.array().colwise() * d.array()).matrix();
  phi /= static_cast<double>(x.rows());
  PlugIn out;
  out.matrix = 0.5 * (phi + phi.transpose());
  out.positive_definite = linalg::sorted_symmetric_eigen(out.matrix).values.minCoeff() >= 1e-10;
  return out;
}

Eigen::MatrixXd quantile_covariance_kernel(const QuantileGrid& grid) {
  const Eigen::Index K = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd c(K, K);
  for (Eigen::Index a = 0; a < K; ++a) {
    for (Eigen::Index b = 0; b < K; ++b) {
      const double lo = std::min(grid.level(static_cast<std::size_t>(a)), grid.level(static_cast<std::size_t>(b)));
      const double hi = std::max(grid.level(static_cast<std::size_t>(a)), grid.level(static_cast<std::size_t>(b)));
      c(a, b) = lo * (1.0 - hi);
    }
  }
  return c;
}

std::vector<Eigen::MatrixXd> cross_loading_moments(const std::vector<Eigen::MatrixXd>& loadings) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(loadings.size() * loadings.size());
  for (const auto& a : loadings) {
    for (const auto& b : loadings) out.push_back(a.transpose() * b / static_cast<double>(a.rows()));
  }
  return out;
}

Eigen::MatrixXd factor_covariance(const Eigen::MatrixXd& psi, const std::vector<Eigen::MatrixXd>& loadings,
                                  const QuantileGrid& grid) {
  const Eigen::MatrixXd c = quantile_covariance_kernel(grid);
  const std::vector<Eigen::MatrixXd> sigma = cross_loading_moments(loadings);
  const std::size_t K = loadings.size();
  Eigen::MatrixXd middle = Eigen::MatrixXd::Zero(psi.rows(), psi.cols());
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = 0; b < K; ++b) {
      middle += grid.weight(a) * grid.weight(b) * c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) *
                sigma[a * K + b];
    }
  }
  const Eigen::MatrixXd inv = invert_floored(psi, "Psi");
  const Eigen::MatrixXd cov = inv * middle * inv / static_cast<double>(loadings.front().rows());
  return 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd loading_covariance(const Eigen::MatrixXd& phi, double tau, Eigen::Index periods) {
  const Eigen::MatrixXd inv = invert_floored(phi, "Phi");
  const Eigen::MatrixXd cov = tau * (1.0 - tau) * inv * inv / static_cast<double>(periods);
  return 0.5 * (cov + cov.transpose());
}

ConfidenceIntervals factor_ci(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg, Eigen::Index t,
                              double level) {
  warn_regime(panel);
  const PlugIn psi = plug_in_psi_at(fit, panel, scfg, t);
  const Eigen::MatrixXd cov = factor_covariance(psi.matrix, fit.loadings, fit.grid);
  return make_intervals(fit.F.row(t).transpose(), cov, level);
}

ConfidenceIntervals loading_ci(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg, std::size_t k,
                               Eigen::Index i, double level) {
  warn_regime(panel);
  const PlugIn phi = plug_in_phi(fit, panel, scfg, k, i);
  const Eigen::MatrixXd cov = loading_covariance(phi.matrix, fit.grid.level(k), panel.periods());
  return make_intervals(fit.loadings[k].row(i).transpose(), cov, level);
}

AsymptoticCov asymptotic_covariances(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg) {
  warn_regime(panel);
  AsymptoticCov out;
  const Eigen::Index N = panel.series();
  out.psi_t = plug_in_psi(fit, panel, scfg);
  out.sigma_kk = cross_loading_moments(fit.loadings);
  for (const auto& psi : out.psi_t) out.factor_cov_t.push_back(factor_covariance(psi.matrix, fit.loadings, fit.grid));
  for (std::size_t k = 0; k < fit.loadings.size(); ++k) {
    for (Eigen::Index i = 0; i < N; ++i) {
      out.phi_ki.push_back(plug_in_phi(fit, panel, scfg, k, i));
      out.loading_cov_ki.push_back(loading_covariance(out.phi_ki.back().matrix, fit.grid.level(k), panel.periods()));
    }
  }
  return out;
}

double rotation_equivariance_gap(const FactorFit& fit, const Panel& panel, const SmoothConfig& scfg,
                                 const Eigen::MatrixXd& rotation, Eigen::Index t) {
  const Eigen::MatrixXd base = factor_covariance(plug_in_psi_at(fit, panel, scfg, t).matrix, fit.loadings, fit.grid);
  FactorFit rotated = fit;
  rotated.F = fit.F * rotation;
  const Eigen::MatrixXd back = rotation.inverse().transpose();
  for (auto& l : rotated.loadings) l = l * back;
  const Eigen::MatrixXd moved =
      factor_covariance(plug_in_psi_at(rotated, panel, scfg, t).matrix, rotated.loadings, rotated.grid);
  const Eigen::MatrixXd expected = rotation.transpose() * base * rotation;
  const double gap = (moved - expected).cwiseAbs().maxCoeff() / std::max(expected.cwiseAbs().maxCoeff(), 1e-300);
  if (gap > 1e-6) log_warning("factor covariance is not rotation-equivariant (relative gap " + std::to_string(gap) + ")");
  return gap;
}

}  // namespace dafm
