// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dafm/distributions.hpp"
#include "dafm/error.hpp"
#include "dafm/estimator.hpp"
#include "dafm/eval.hpp"
#include "dafm/forecast.hpp"
#include "dafm/log.hpp"
#include "dafm/lp_oracle.hpp"
#include "dafm/qr_solver.hpp"
#include "dafm/random.hpp"
#include "dafm/rank_select.hpp"
#include "dafm/simgen.hpp"
#include "dafm/smooth_infer.hpp"

using namespace dafm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0, double e = 0, double f = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d, e, f);
  return buf;
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Mean adjusted R2 of each true factor over replications.
Eigen::VectorXd recovery(Dgp dgp, const ErrorDist& dist, Eigen::Index n, int reps, std::uint64_t master,
                         const std::function<FactorFit(const Panel&)>& fit) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(3);
  for (int rep = 0; rep < reps; ++rep) {
    const SimData sim = generate(dgp, n, n, dist, derive_seed(master, static_cast<std::uint64_t>(rep)));
    total += adjusted_r2_all(sim.truth.F0, fit(sim.panel).F);
  }
  return total / reps;
}

Outcome scale_factor_identification() {
  const QuantileGrid grid = QuantileGrid::standard();
  FitConfig cfg;
  cfg.r = 3;
  const Eigen::VectorXd dafm = recovery(Dgp::location_scale_shift, ErrorDist::gaussian(), 50, 20, 101,
                                        [&](const Panel& p) { return fit_dafm(p, grid, cfg); });
  const Eigen::VectorXd qfm = recovery(Dgp::location_scale_shift, ErrorDist::gaussian(), 50, 20, 101,
                                       [&](const Panel& p) { return fit_qfm(p, 0.5, cfg); });
  return {dafm(2) >= 0.80 && qfm(2) <= 0.10,
          fmt("f3 adjusted R2: DAFM %.4f (>= 0.80), QFM(0.5) %.4f (<= 0.10)", dafm(2), qfm(2))};
}

Outcome heavy_tail_recovery() {
  const ErrorDist dist = ErrorDist::student_t(2.0);
  const QuantileGrid grid = density_weights(dist, QuantileGrid::standard());
  FitConfig cfg;
  cfg.r = 4;
  const Eigen::VectorXd r2 = recovery(Dgp::location_shift, dist, 100, 10, 202,
                                      [&](const Panel& p) { return fit_dafm(p, grid, cfg); });
  return {r2.minCoeff() >= 0.96, fmt("adjusted R2 (f1, f2, f3) = (%.4f, %.4f, %.4f), each >= 0.96", r2(0), r2(1), r2(2))};
}

Outcome bimodal_recovery() {
  const ErrorDist dist = parse_dist("mixture");
  const QuantileGrid grid = density_weights(dist, QuantileGrid::standard());
  FitConfig cfg;
  cfg.r = 4;
  const Eigen::VectorXd r2 = recovery(Dgp::location_shift, dist, 50, 10, 303,
                                      [&](const Panel& p) { return fit_dafm(p, grid, cfg); });
  return {r2(0) >= 0.92 && r2(1) >= 0.90 && r2(2) >= 0.88,
          fmt("adjusted R2 (f1, f2, f3) = (%.4f, %.4f, %.4f) vs (0.92, 0.90, 0.88)", r2(0), r2(1), r2(2))};
}

Outcome rank_recovery() {
  const QuantileGrid grid = QuantileGrid::standard();
  const FitConfig cfg;
  const int reps = 20;
  int ic_hits = 0;
  int eigen_hits = 0;
  std::string picks;
  for (int rep = 0; rep < reps; ++rep) {
    const SimData sim = gen_location_scale_shift(100, 100, ErrorDist::gaussian(), derive_seed(404, rep));
    const int s_max = default_smax(100, 100);
    const int ic = select_rank_ic(sim.panel, grid, s_max, std::nullopt, cfg).r_hat;
    const int eig = select_rank_eigen(sim.panel, grid, s_max, std::nullopt, cfg).r_hat;
    ic_hits += ic == 3;
    eigen_hits += eig == 3;
    picks += std::to_string(ic) + "/" + std::to_string(eig) + " ";
  }
  const double ic_rate = static_cast<double>(ic_hits) / reps;
  const double eigen_rate = static_cast<double>(eigen_hits) / reps;
  return {ic_rate >= 0.9 && eigen_rate >= 0.9,
          fmt("r_hat = 3 in %.0f%% (IC) and %.0f%% (eigenvalue) of runs, need >= 90%%", 100 * ic_rate,
              100 * eigen_rate) + "; picks ic/eig: " + picks};
}

Outcome oracle_equivalence() {
  Rng rng(505);
  double worst_regress = 0.0;
  double worst_factor = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const Eigen::Index t = 8 + static_cast<Eigen::Index>(rng.next() % 13);
    const Eigen::Index n = 8 + static_cast<Eigen::Index>(rng.next() % 13);
    const Eigen::Index r = 1 + static_cast<Eigen::Index>(rng.next() % 3);
    const std::size_t K = 1 + rng.next() % 3;
    std::vector<double> levels;
    for (std::size_t k = 0; k < K; ++k) levels.push_back((k + 1.0) / (K + 1.0));
    std::vector<double> weights;
    for (std::size_t k = 0; k < K; ++k) weights.push_back(0.5 + rng.uniform());
    const QuantileGrid grid(levels, weights);

    const Eigen::MatrixXd z = gaussian(t, r, rng);
    Eigen::VectorXd y = z * gaussian(r, 1, rng);
    for (Eigen::Index i = 0; i < t; ++i) y(i) += rng.student_t(3.0);
    const double tau = 0.1 + 0.8 * rng.uniform();
    const double fast = quantile_objective(y, z, tau, quantile_regress(y, z, tau));
    const double ref = quantile_objective(y, z, tau, lp_oracle_quantile(y, z, tau));
    worst_regress = std::max(worst_regress, fast - ref);

    std::vector<Eigen::MatrixXd> loadings;
    for (std::size_t k = 0; k < K; ++k) loadings.push_back(gaussian(n, r, rng));
    Eigen::VectorXd x_t = loadings[0] * gaussian(r, 1, rng);
    for (Eigen::Index i = 0; i < n; ++i) x_t(i) += rng.normal();
    const StackedDesign stacked = stack_loadings(loadings, grid);
    Eigen::VectorXd response(n * static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k) response.segment(static_cast<Eigen::Index>(k) * n, n) = x_t;
    const Eigen::VectorXd f_ref = lp_oracle_check_regression(stacked.design, response, stacked.tau, stacked.weight);
    const double step = composite_factor_objective(x_t, loadings, grid, composite_factor_step(x_t, loadings, grid));
    worst_factor = std::max(worst_factor, step - composite_factor_objective(x_t, loadings, grid, f_ref));
  }
  return {worst_regress <= 1e-6 && worst_factor <= 1e-6,
          fmt("largest objective gap vs LP oracle: quantile_regress %.2e, composite_factor_step %.2e (<= 1e-6)",
              worst_regress, worst_factor)};
}

Outcome algorithmic_invariants() {
  double trace_rise = 0.0;
  double gram_dev = 0.0;
  double offdiag = 0.0;
  double preservation = 0.0;
  double cross_k = 0.0;
  double k1_gap = 0.0;
  const QuantileGrid grid = QuantileGrid::standard();
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const SimData sim = gen_location_scale_shift(30, 30, ErrorDist::student_t(3.0), derive_seed(606, rep));
    FitConfig cfg;
    cfg.r = 3;
    const FactorFit fit = fit_dafm(sim.panel, grid, cfg);
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
      trace_rise = std::max(trace_rise, fit.objective_trace[i] - fit.objective_trace[i - 1]);
    }
    const double T = 30.0;
    gram_dev = std::max(gram_dev, max_abs(fit.F.transpose() * fit.F / T - Eigen::MatrixXd::Identity(3, 3)));
    const Eigen::MatrixXd& l = fit.loadings[grid.median_index() - 1];
    Eigen::MatrixXd lg = l.transpose() * l / 30.0;
    lg.diagonal().setZero();
    offdiag = std::max(offdiag, max_abs(lg));

    Rng rng(derive_seed(607, rep));
    const Eigen::MatrixXd raw_f = gaussian(30, 3, rng);
    std::vector<Eigen::MatrixXd> raw_l;
    for (int k = 0; k < 5; ++k) raw_l.push_back(gaussian(30, 3, rng));
    const NormalizedFactors nf = normalize_fit(raw_f, raw_l, 3);
    for (int k = 0; k < 5; ++k) {
      preservation =
          std::max(preservation, max_abs(nf.loadings[k] * nf.F.transpose() - raw_l[k] * raw_f.transpose()));
    }

    for (std::size_t k_star = 1; k_star <= grid.size(); ++k_star) {
      cfg.k_star = k_star;
      const FactorFit other = fit_dafm(sim.panel, grid, cfg);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        cross_k = std::max(cross_k, max_abs(other.common_component(k) - fit.common_component(k)));
      }
    }
    cfg.k_star = 0;
    const FactorFit single = fit_dafm(sim.panel, QuantileGrid::single(0.5), cfg);
    const FactorFit qfm = fit_qfm(sim.panel, 0.5, cfg);
    if (single.objective_trace.size() != qfm.objective_trace.size()) {
      k1_gap = INFINITY;
    } else {
      for (std::size_t i = 0; i < qfm.objective_trace.size(); ++i) {
        k1_gap = std::max(k1_gap, std::abs(single.objective_trace[i] - qfm.objective_trace[i]));
      }
    }
  }
  const bool pass = trace_rise <= 1e-8 && gram_dev <= 1e-8 && offdiag <= 1e-8 && preservation <= 1e-10 &&
                    cross_k <= 1e-9 && k1_gap <= 1e-10;
  return {pass, fmt("trace rise %.1e, F'F/T-I %.1e, off-diagonal %.1e, preservation %.1e, cross-k* %.1e, "
                    "K=1 vs QFM %.1e",
                    trace_rise, gram_dev, offdiag, preservation, cross_k, k1_gap)};
}

Outcome smoothing_correctness() {
  const Kernel kernel = build_kernel(8);
  double moment_err = 0.0;
  for (int j = 0; j < kernel.order(); ++j) {
    const double m = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double s) { return std::pow(s, j) * kernel.density(s); }, -1.0, 1.0, 15, 1e-14);
    moment_err = std::max(moment_err, std::abs(m - (j == 0 ? 1.0 : 0.0)));
  }

  const SmoothConfig cfg = SmoothConfig::standard(100);
  const double h = cfg.bandwidth;
  Rng rng(707);
  double grad_err = 0.0;
  for (int j = 0; j < 100; ++j) {
    const double e = (2.0 * rng.uniform() - 1.0) * 1.5 * h;
    const double tau = 0.05 + 0.9 * rng.uniform();
    const double step = 1e-6 * h;
    const double fd = (smoothed_check_loss(e + step, tau, cfg) - smoothed_check_loss(e - step, tau, cfg)) / (2 * step);
    const double an = smoothed_check_derivative(e, tau, cfg);
    grad_err = std::max(grad_err, std::abs(fd - an) / std::max(1.0, std::abs(an)));
  }

  int mismatches = 0;
  for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    for (int j = 0; j <= 200; ++j) {
      const double e = h * (1.0 + 0.05 * j);
      if (smoothed_check_loss(e, tau, cfg) != check_loss(e, tau)) ++mismatches;
      if (smoothed_check_loss(-e, tau, cfg) != check_loss(-e, tau)) ++mismatches;
    }
  }
  return {moment_err <= 1e-8 && grad_err <= 1e-5 && mismatches == 0,
          fmt("kernel moment error %.1e (<= 1e-8), gradient relative error %.1e (<= 1e-5), %.0f mismatches "
              "outside the bandwidth",
              moment_err, grad_err, mismatches)};
}

Outcome ci_sanity() {
  const Eigen::Index n = 200;
  const int reps = 20;
  const QuantileGrid grid = QuantileGrid::standard();
  FitConfig cfg;
  cfg.r = 4;
  const SmoothConfig scfg = SmoothConfig::standard(n);
  long draws = 0;
  long skipped = 0;
  Eigen::VectorXd per_component = Eigen::VectorXd::Zero(4);
  for (int rep = 0; rep < reps; ++rep) {
    const SimData sim = gen_location_shift(n, n, ErrorDist::gaussian(), derive_seed(808, rep));
    const FactorFit fit = fit_smoothed_dafm(sim.panel, grid, cfg, scfg);
    const SmoothConfig plug = inference_config(fit, sim.panel, scfg);
    const NormalizedFactors truth =
        normalize_fit(sim.truth.dafm_factors(), sim.truth.dafm_loadings(grid), grid.median_index());
    const Eigen::VectorXd sign = sign_align(fit.F, truth.F);
    const Eigen::MatrixXd aligned = truth.F * sign.asDiagonal();
    for (Eigen::Index t = 10; t < n; t += 20) {
      ConfidenceIntervals ci;
      try {
        ci = factor_ci(fit, sim.panel, plug, t, 0.95);
      } catch (const NumericalError&) {
        ++skipped;
        continue;
      }
      for (Eigen::Index j = 0; j < 4; ++j) {
        per_component(j) += ci.lower(j) <= aligned(t, j) && aligned(t, j) <= ci.upper(j);
      }
      ++draws;
    }
  }
  // The judged quantity is the leading factor; the others are reported.
  per_component /= std::max<double>(1.0, static_cast<double>(draws));
  const double coverage = per_component(0);
  return {draws >= 200 && coverage >= 0.85 && coverage <= 0.99,
          fmt("f1 coverage %.4f over %.0f draws (need [0.85, 0.99], >= 200 draws); all components %.3f %.3f %.3f %.3f",
              coverage, static_cast<double>(draws), per_component(0), per_component(1), per_component(2),
              per_component(3)) +
              fmt(", pooled %.4f; %.0f non-PD skipped", per_component.mean(), static_cast<double>(skipped))};
}

Outcome forecast_harness() {
  const Eigen::Index periods = 240;
  const Eigen::Index window = 120;
  FitConfig cfg;
  cfg.r = 3;
  const QuantileGrid grid = QuantileGrid::standard();

  // Factor-driven target: dy[t] = f1[t-1] + 0.5 f2[t-1] + 0.5 noise.
  const auto target = [&](const SimData& sim, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd y(periods);
    y(0) = 0.0;
    for (Eigen::Index t = 1; t < periods; ++t) {
      y(t) = y(t - 1) + sim.truth.F0(t - 1, 0) + 0.5 * sim.truth.F0(t - 1, 1) + 0.5 * rng.normal();
    }
    return y;
  };

  // No look-ahead: corrupting everything after the origin leaves the forecast unchanged.
  bool audit = true;
  {
    const SimData sim = gen_location_shift(60, periods, ErrorDist::gaussian(), derive_seed(909, 100));
    const Eigen::VectorXd y = target(sim, 1);
    ForecastTask task;
    task.horizon = 3;
    task.window = window;
    for (Eigen::Index origin : {Eigen::Index{150}, Eigen::Index{200}}) {
      WindowFactorCache clean_cache(sim.panel, window, grid, cfg, false);
      const ForecastPoint clean = forecast_at_origin(sim.panel, y, origin, task, clean_cache);
      Eigen::MatrixXd x = sim.panel.values();
      x.bottomRows(periods - origin - 1).setConstant(-7e5);
      Eigen::VectorXd y_bad = y;
      y_bad.tail(periods - origin - 1).setConstant(3e5);
      y_bad(origin + task.horizon) = y(origin + task.horizon);
      const Panel bad(x);
      WindowFactorCache bad_cache(bad, window, grid, cfg, false);
      const ForecastPoint again = forecast_at_origin(bad, y_bad, origin, task, bad_cache);
      audit = audit && again.forecast == clean.forecast && again.benchmark == clean.benchmark;
    }
  }

  // Nested identity: an all-zero factor block reproduces the AR forecast.
  double nested_gap = 0.0;
  {
    Rng rng(910);
    Eigen::VectorXd y(window);
    y(0) = 0.0;
    for (Eigen::Index t = 1; t < window; ++t) y(t) = y(t - 1) + rng.normal();
    const Eigen::MatrixXd none(window, 0);
    const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(window, 3);
    for (Eigen::Index h : {1, 3}) {
      for (int p = 0; p <= 4; ++p) {
        const double ar = predict_factor_ar(fit_factor_ar(y, none, p, h), y, none, window - 1);
        const double nested = predict_factor_ar(fit_factor_ar(y, zeros, p, h), y, zeros, window - 1);
        nested_gap = std::max(nested_gap, std::abs(ar - nested));
      }
    }
  }

  int wins = 0;
  std::string ratios;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SimData sim = gen_location_shift(60, periods, ErrorDist::gaussian(), derive_seed(909, seed));
    const Eigen::VectorXd y = target(sim, derive_seed(990, seed));
    WindowFactorCache cache(sim.panel, window, grid, cfg);
    bool all_better = true;
    for (Eigen::Index h : {1, 3}) {
      ForecastTask task;
      task.horizon = h;
      task.window = window;
      const ForecastResult res = rolling_forecast(sim.panel, y, task, cache);
      all_better = all_better && res.relative_mse < 1.0;
      ratios += fmt("%.2f", res.relative_mse) + (h == 1 ? "/" : " ");
    }
    wins += all_better;
  }
  return {audit && nested_gap <= 1e-10 && wins >= 8,
          std::string("look-ahead audit ") + (audit ? "passed" : "FAILED") +
              fmt(", nested gap %.1e (<= 1e-10), relative MSE < 1 at h=1 and h=3 in %.0f/10 seeds (need 8); ",
                  nested_gap, wins) +
              "h1/h3: " + ratios};
}

}  // namespace

int main(int argc, char** argv) {
  set_log_level(LogLevel::quiet);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"scale-factor identification", scale_factor_identification},
      {"heavy-tail recovery", heavy_tail_recovery},
      {"bimodal-error recovery", bimodal_recovery},
      {"rank recovery", rank_recovery},
      {"oracle equivalence", oracle_equivalence},
      {"algorithmic invariants", algorithmic_invariants},
      {"smoothing correctness", smoothing_correctness},
      {"confidence interval coverage", ci_sanity},
      {"forecast harness", forecast_harness},
  };
  // Optional argument: comma-separated criterion numbers to run.
  std::vector<bool> selected(criteria.size(), argc < 2);
  if (argc >= 2) {
    std::string list = argv[1];
    std::size_t pos = 0;
    while (pos <= list.size()) {
      const std::size_t comma = std::min(list.find(',', pos), list.size());
      const int idx = std::stoi(list.substr(pos, comma - pos));
      if (idx >= 1 && idx <= static_cast<int>(criteria.size())) selected[static_cast<std::size_t>(idx - 1)] = true;
      pos = comma + 1;
    }
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %zu (%s): %s [%.0f s]\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                out.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !out.pass;
  }
  return failures == 0 ? 0 : 1;
}
