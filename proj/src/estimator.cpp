#include "dafm/estimator.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "dafm/error.hpp"
#include "dafm/linalg.hpp"
#include "dafm/log.hpp"
#include "dafm/parallel.hpp"
#include "dafm/random.hpp"

namespace dafm {
namespace {

void validate(const Panel& panel, const QuantileGrid& grid, const FitConfig& cfg) {
  if (cfg.r < 1) throw InvalidArgument("number of factors r must be at least 1");
  if (panel.series() <= cfg.r || panel.periods() <= cfg.r) {
    throw InvalidArgument("fit requires N > r and T > r (N=" + std::to_string(panel.series()) +
                          ", T=" + std::to_string(panel.periods()) + ", r=" + std::to_string(cfg.r) + ")");
  }
  if (!(cfg.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (cfg.max_outer < 1) throw InvalidArgument("max_outer must be at least 1");
  if (cfg.k_star > grid.size()) throw InvalidArgument("k_star exceeds the number of quantile levels");
  if (!(cfg.divergence_bound > 0.0)) throw InvalidArgument("divergence bound must be positive");
  if (cfg.starts < 1) throw InvalidArgument("starts must be at least 1");
}

Eigen::MatrixXd leading_factors(const Eigen::MatrixXd& x, int r, Eigen::VectorXd* singular_values) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU);
  if (singular_values) *singular_values = svd.singularValues();
  return std::sqrt(static_cast<double>(x.rows())) * svd.matrixU().leftCols(r);
}

double series_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& f, double tau, const Eigen::VectorXd& l) {
  return quantile_objective(y, f, tau, l);
}

}  // namespace

Eigen::MatrixXd FactorFit::common_component(std::size_t k) const { return loadings.at(k) * F.transpose(); }

PcaResult mean_pca(const Panel& panel, int r) {
  if (r < 1 || panel.series() <= r || panel.periods() <= r) {
    throw InvalidArgument("mean_pca requires 1 <= r < min(N, T)");
  }
  const Eigen::MatrixXd& x = panel.values();
  PcaResult out;
  out.F = leading_factors(x, r, &out.singular_values);
  const double top = out.singular_values(0);
  if (!(out.singular_values(r - 1) > 1e-12 * std::max(top, 1e-300))) {
    throw NumericalError("mean_pca: panel rank is below r=" + std::to_string(r));
  }
  out.loadings = x.transpose() * out.F / static_cast<double>(x.rows());
  return out;
}

Eigen::MatrixXd initial_factors(const Panel& panel, const FitConfig& cfg) {
  const Eigen::Index T = panel.periods();
  if (cfg.initial_factors) {
    if (cfg.initial_factors->rows() != T || cfg.initial_factors->cols() != cfg.r) {
      throw InvalidArgument("initial factors must be T x r");
    }
    return *cfg.initial_factors;
  }
  if (cfg.init == InitMethod::random_orthonormal) {
    Rng rng(cfg.seed);
    Eigen::MatrixXd g(T, cfg.r);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index t = 0; t < T; ++t) g(t, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(T, cfg.r);
    return std::sqrt(static_cast<double>(T)) * q;
  }
  Eigen::MatrixXd x;
  try {
    x = standardize(panel).panel.values();
  } catch (const DataError&) {
    // A constant series cannot be scaled; fall back to centering only.
    x = panel.values().rowwise() - panel.values().colwise().mean();
  }
  return leading_factors(x, cfg.r, nullptr);
}

namespace {

FactorFit fit_single_start(const Panel& panel, const QuantileGrid& grid, const FitConfig& cfg) {
  const Eigen::MatrixXd& x = panel.values();
  const Eigen::Index T = x.rows();
  const Eigen::Index N = x.cols();
  const std::size_t K = grid.size();
  const Eigen::Index r = cfg.r;
  const std::size_t k_star = cfg.k_star == 0 ? grid.median_index() : cfg.k_star;

  Eigen::MatrixXd F = initial_factors(panel, cfg);
  {
    const auto root = linalg::symmetric_root(F.transpose() * F / static_cast<double>(T));
    F = F * root.inverse_root;
  }
  std::vector<Eigen::MatrixXd> loadings(K, Eigen::MatrixXd::Zero(N, r));
  bool have_loadings = false;

  FactorFit fit;
  fit.grid = grid;
  double previous = std::numeric_limits<double>::infinity();

  for (int iter = 1; iter <= cfg.max_outer; ++iter) {
    try {
      // Loadings: one quantile regression per (level, series).
      std::vector<Eigen::MatrixXd> next(K, Eigen::MatrixXd(N, r));
      parallel_for(K * static_cast<std::size_t>(N), cfg.jobs, [&](std::size_t idx) {
        const std::size_t k = idx / static_cast<std::size_t>(N);
        const Eigen::Index i = static_cast<Eigen::Index>(idx % static_cast<std::size_t>(N));
        const double tau = grid.level(k);
        const Eigen::VectorXd y = x.col(i);
        Eigen::VectorXd l = quantile_regress(y, F, tau);
        if (have_loadings) {
          const Eigen::VectorXd old = loadings[k].row(i).transpose();
          if (series_objective(y, F, tau, old) < series_objective(y, F, tau, l)) l = old;
        }
        next[k].row(i) = l.transpose();
      });
      loadings = std::move(next);
      have_loadings = true;

      // Factors: one stacked weighted quantile regression per period.
      const StackedDesign stacked = stack_loadings(loadings, grid);
      Eigen::MatrixXd next_f(T, r);
      parallel_for(static_cast<std::size_t>(T), cfg.jobs, [&](std::size_t tt) {
        const Eigen::Index t = static_cast<Eigen::Index>(tt);
        const Eigen::VectorXd xt = x.row(t).transpose();
        const Eigen::VectorXd old = F.row(t).transpose();
        Eigen::VectorXd f = composite_factor_step(xt, stacked, cfg.factor_step, &old);
        if (composite_factor_objective(xt, loadings, grid, old) < composite_factor_objective(xt, loadings, grid, f)) {
          f = old;
        }
        next_f.row(t) = f.transpose();
      });
      F = std::move(next_f);
    } catch (const NumericalError& e) {
      throw NumericalError("outer iteration " + std::to_string(iter) + ": " + e.what());
    }

    const double max_norm = F.rowwise().norm().maxCoeff();
    if (!(max_norm <= cfg.divergence_bound)) {
      throw NumericalError("outer iteration " + std::to_string(iter) + ": factor norm " +
                           std::to_string(max_norm) + " exceeds the divergence bound");
    }
    const double objective = composite_objective(x, F, loadings, grid);
    fit.objective_trace.push_back(objective);

    // Rescale so that F'F/T = I; the products Lambda_k F' are unchanged.
    const auto root = linalg::symmetric_root(F.transpose() * F / static_cast<double>(T));
    F = F * root.inverse_root;
    for (auto& l : loadings) l = l * root.root;

    if (iter > 1 && std::abs(objective - previous) / std::max(previous, 1e-12) < cfg.tol) {
      fit.converged = true;
      break;
    }
    previous = objective;
  }
  if (!fit.converged) {
    log_info("alternating loop stopped at max_outer=" + std::to_string(cfg.max_outer) + " before converging");
  }

  NormalizedFactors norm = normalize_fit(F, loadings, k_star);
  fit.F = std::move(norm.F);
  fit.loadings = std::move(norm.loadings);
  fit.normalization = std::move(norm.report);
  return fit;
}

}  // namespace

FactorFit fit_dafm(const Panel& panel, const QuantileGrid& grid, const FitConfig& cfg) {
  validate(panel, grid, cfg);
  const int starts = cfg.initial_factors ? 1 : cfg.starts;
  std::optional<FactorFit> best;
  std::string failure;
  for (int s = 0; s < starts; ++s) {
    FitConfig run = cfg;
    if (s > 0) {
      run.init = InitMethod::random_orthonormal;
      run.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(s));
    }
    try {
      FactorFit fit = fit_single_start(panel, grid, run);
      if (!best || fit.objective_trace.back() < best->objective_trace.back()) best = std::move(fit);
    } catch (const NumericalError& e) {
      if (starts == 1) throw;
      log_info("start " + std::to_string(s + 1) + " failed: " + e.what());
      if (failure.empty()) failure = e.what();
    }
  }
  if (!best) throw NumericalError("every start failed; first: " + failure);
  return std::move(*best);
}

FactorFit fit_qfm(const Panel& panel, double tau, const FitConfig& cfg) {
  FitConfig single = cfg;
  single.k_star = 1;
  return fit_dafm(panel, QuantileGrid::single(tau), single);
}

FactorFit fit_qfm(const Panel& panel, double tau, int r, FitConfig cfg) {
  cfg.r = r;
  return fit_qfm(panel, tau, cfg);
}

}  // namespace dafm
