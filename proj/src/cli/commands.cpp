#include "dafm/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli/manifest.hpp"
#include "dafm/distributions.hpp"
#include "dafm/error.hpp"
#include "dafm/estimator.hpp"
#include "dafm/eval.hpp"
#include "dafm/fit_io.hpp"
#include "dafm/forecast.hpp"
#include "dafm/log.hpp"
#include "dafm/panel.hpp"
#include "dafm/parallel.hpp"
#include "dafm/rank_select.hpp"
#include "dafm/simgen.hpp"
#include "dafm/smooth_infer.hpp"

namespace dafm::cli {
namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- parsing

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InvalidArgument(what + ": '" + text + "' is not a number");
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(to_double(item, what));
  if (out.empty()) throw InvalidArgument(what + ": empty list");
  return out;
}

/// --weights: uniform | low2x | med2x | high2x | density:<dist> | w1,w2,...
QuantileGrid build_grid(const std::string& levels, const std::string& weights) {
  QuantileGrid grid(parse_numbers(levels, "--levels"));
  const std::string w = trim(weights);
  if (w.rfind("density:", 0) == 0) return density_weights(parse_dist(w.substr(8)), grid);
  if (w == "uniform" || w == "low2x" || w == "med2x" || w == "high2x") {
    return weight_scheme(grid, parse_weight_scheme(w));
  }
  return grid.with_weights(parse_numbers(w, "--weights"));
}

Orientation parse_orientation(const std::string& name) {
  if (name == "time-rows") return Orientation::time_rows;
  if (name == "series-rows") return Orientation::series_rows;
  throw InvalidArgument("--orientation must be time-rows or series-rows, got '" + name + "'");
}

InitMethod parse_init(const std::string& name) {
  if (name == "pca") return InitMethod::pca;
  if (name == "random" || name == "random-orthonormal") return InitMethod::random_orthonormal;
  throw InvalidArgument("--init must be pca or random, got '" + name + "'");
}

FactorStepMethod parse_factor_step(const std::string& name) {
  if (name == "interior-point") return FactorStepMethod::interior_point;
  if (name == "admm") return FactorStepMethod::admm;
  throw InvalidArgument("--factor-step must be interior-point or admm, got '" + name + "'");
}

std::vector<std::string> factor_header(Eigen::Index r, const std::string& prefix) {
  std::vector<std::string> h;
  for (Eigen::Index j = 0; j < r; ++j) h.push_back(prefix + std::to_string(j + 1));
  return h;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------- options

struct Common {
  std::string config;
  std::string out;
  std::size_t jobs = 1;
  bool verbose = false;
  bool quiet = false;
};

struct EstimatorOptions {
  std::string levels = "0.1,0.3,0.5,0.7,0.9";
  std::string weights = "uniform";
  int r = 1;
  double tol = 1e-6;
  int max_outer = 100;
  std::string init = "pca";
  int starts = 3;
  std::uint64_t seed = 1;
  std::size_t k_star = 0;
  std::string factor_step = "interior-point";
};

struct PanelOptions {
  std::string panel;
  std::string orientation = "time-rows";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value (or JSON manifest) file; flags override it");
  sub->add_option("--out", c.out, std::string("output directory (default $") + kOutputDirEnv + " or dafm_out/<command>)");
  sub->add_option("--jobs", c.jobs, "worker threads, 0 = hardware concurrency");
  sub->add_flag("--verbose", c.verbose, "log progress");
  sub->add_flag("--quiet", c.quiet, "suppress warnings");
}

void add_panel(CLI::App* sub, PanelOptions& p) {
  sub->add_option("--panel", p.panel, "panel CSV")->required();
  sub->add_option("--orientation", p.orientation, "time-rows or series-rows");
}

void add_estimator(CLI::App* sub, EstimatorOptions& e, bool with_grid) {
  if (with_grid) {
    sub->add_option("--levels", e.levels, "comma-separated quantile levels");
    sub->add_option("--weights", e.weights, "uniform, low2x, med2x, high2x, density:<dist>, or a list");
  }
  sub->add_option("--r", e.r, "number of factors");
  sub->add_option("--tol", e.tol, "relative objective-change tolerance");
  sub->add_option("--max-outer", e.max_outer, "outer iteration cap");
  sub->add_option("--init", e.init, "pca or random");
  sub->add_option("--starts", e.starts, "starts tried, the lowest objective is kept");
  sub->add_option("--seed", e.seed, "seed for random initialization");
  sub->add_option("--k-star", e.k_star, "1-based normalization level, 0 = closest to 0.5");
  sub->add_option("--factor-step", e.factor_step, "interior-point or admm");
}

FitConfig fit_config(const EstimatorOptions& e, const Common& c) {
  FitConfig cfg;
  cfg.r = e.r;
  cfg.tol = e.tol;
  cfg.max_outer = e.max_outer;
  cfg.init = parse_init(e.init);
  cfg.starts = e.starts;
  cfg.seed = e.seed;
  cfg.k_star = e.k_star;
  cfg.factor_step.method = parse_factor_step(e.factor_step);
  cfg.jobs = c.jobs;
  return cfg;
}

Panel read_panel(const PanelOptions& p) { return load_panel(p.panel, parse_orientation(p.orientation)); }

// ---------------------------------------------------------------- context

struct Context {
  CLI::App* sub = nullptr;
  Common* common = nullptr;
  fs::path out;
  RunRecord record;
};

fs::path resolve_out(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return fs::path(env);
  return fs::path("dafm_out") / command;
}

std::vector<std::pair<std::string, std::string>> resolved_config(const CLI::App* sub, const fs::path& out) {
  std::vector<std::pair<std::string, std::string>> config;
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string value;
    if (name == "out") {
      value = out.string();
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
      if (opt->get_expected_max() == 0) value = "true";
    } else {
      value = opt->get_default_str();
      if (opt->get_expected_max() == 0) value = "false";
    }
    config.emplace_back(name, value);
  }
  return config;
}

// ---------------------------------------------------------------- commands

struct SimulateOptions {
  std::string dgp = "location-shift";
  std::string dist = "gaussian";
  Eigen::Index n = 50;
  Eigen::Index t = 50;
  std::uint64_t seed = 1;
};

void cmd_simulate(const SimulateOptions& o, Context& ctx) {
  const Dgp dgp = parse_dgp(o.dgp);
  const ErrorDist dist = parse_dist(o.dist);
  if (o.n < 1 || o.t < 1) throw InvalidArgument("--n and --t must be at least 1");
  const SimData data = generate(dgp, o.n, o.t, dist, o.seed);
  const fs::path truth = ctx.out / "truth";
  fs::create_directories(truth);
  save_panel(data.panel, ctx.out / "panel.csv");
  save_matrix_csv(data.truth.F0, factor_header(data.truth.F0.cols(), "f"), truth / "F0.csv");
  save_matrix_csv(data.truth.loadings0, factor_header(data.truth.loadings0.cols(), "lambda"), truth / "loadings0.csv");
  auto meta = open_output(truth / "meta");
  meta << "dgp = " << to_string(dgp) << "\n";
  meta << "dist = " << dist.describe() << "\n";
  meta << "seed = " << o.seed << "\n";
  meta << "N = " << o.n << "\n";
  meta << "T = " << o.t << "\n";
  meta << "dafm_rank = " << data.truth.dafm_rank() << "\n";
  ctx.record.outputs = {"panel.csv", "truth/F0.csv", "truth/loadings0.csv", "truth/meta"};
  ctx.record.details["seed"] = o.seed;
  ctx.record.details["dist"] = dist.describe();
}

struct FitOptions {
  PanelOptions panel;
  EstimatorOptions est;
  bool smooth = false;
  double bandwidth_exponent = 0.0;
};

void finish_fit(const FactorFit& fit, Context& ctx) {
  save_fit(fit, ctx.out);
  ctx.record.outputs = {"F.csv", "meta"};
  for (std::size_t k = 0; k < fit.grid.size(); ++k) ctx.record.outputs.push_back("Lambda_" + std::to_string(k + 1) + ".csv");
  ctx.record.details["converged"] = fit.converged;
  ctx.record.details["iterations"] = fit.objective_trace.size();
  if (!fit.objective_trace.empty()) ctx.record.details["objective"] = fit.objective_trace.back();
  if (!fit.converged) log_warning("fit did not converge within max-outer iterations");
}

SmoothConfig smooth_config(double exponent, Eigen::Index periods) {
  if (exponent == 0.0) return SmoothConfig::standard(periods);
  return SmoothConfig::from_exponent(build_kernel(8), exponent, periods);
}

void cmd_fit(const FitOptions& o, Context& ctx) {
  const Panel panel = read_panel(o.panel);
  const QuantileGrid grid = build_grid(o.est.levels, o.est.weights);
  const FitConfig cfg = fit_config(o.est, *ctx.common);
  ctx.record.details["seed"] = o.est.seed;
  const FactorFit fit = o.smooth ? fit_smoothed_dafm(panel, grid, cfg, smooth_config(o.bandwidth_exponent, panel.periods()))
                                 : fit_dafm(panel, grid, cfg);
  finish_fit(fit, ctx);
}

struct FitQfmOptions {
  PanelOptions panel;
  EstimatorOptions est;
  double tau = 0.5;
};

void cmd_fit_qfm(const FitQfmOptions& o, Context& ctx) {
  const Panel panel = read_panel(o.panel);
  ctx.record.details["seed"] = o.est.seed;
  finish_fit(fit_qfm(panel, o.tau, fit_config(o.est, *ctx.common)), ctx);
}

struct RankOptions {
  PanelOptions panel;
  EstimatorOptions est;
  std::string method = "ic";
  int smax = 0;
  double penalty = 0.0;
  std::string thresholds;
};

void cmd_rank(const RankOptions& o, Context& ctx) {
  const Panel panel = read_panel(o.panel);
  const QuantileGrid grid = build_grid(o.est.levels, o.est.weights);
  const FitConfig cfg = fit_config(o.est, *ctx.common);
  const int s_max = o.smax > 0 ? o.smax : default_smax(panel.series(), panel.periods());
  RankSelection sel;
  if (o.method == "ic") {
    sel = select_rank_ic(panel, grid, s_max, o.penalty > 0.0 ? std::optional<double>(o.penalty) : std::nullopt, cfg);
  } else if (o.method == "eigen") {
    std::optional<Eigen::VectorXd> kappa;
    if (!o.thresholds.empty()) {
      const auto v = parse_numbers(o.thresholds, "--thresholds");
      kappa = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    sel = select_rank_eigen(panel, grid, s_max, kappa, cfg);
  } else {
    throw InvalidArgument("--method must be ic or eigen, got '" + o.method + "'");
  }
  fs::create_directories(ctx.out);
  write_rank_audit(sel, ctx.out / "rank_audit.csv");
  auto summary = open_output(ctx.out / "rank.txt");
  summary << "method = " << o.method << "\n";
  summary << "s_max = " << sel.s_max << "\n";
  summary << "r_hat = " << sel.r_hat << "\n";
  summary << "all_converged = " << (sel.all_converged ? "true" : "false") << "\n";
  if (o.method == "ic") summary << "penalty = " << format_double(sel.penalty) << "\n";
  ctx.record.outputs = {"rank_audit.csv", "rank.txt"};
  ctx.record.details["r_hat"] = sel.r_hat;
  ctx.record.details["s_max"] = sel.s_max;
  if (!sel.all_converged) log_warning("some candidate fits did not converge; criteria use their last iterates");
  std::cout << "r_hat = " << sel.r_hat << "\n";
}

struct InferOptions {
  PanelOptions panel;
  EstimatorOptions est;
  std::string fit;
  double level = 0.95;
  double bandwidth_exponent = 0.0;
  double plugin_multiplier = 6.0;
  bool loadings = true;
};

void write_interval_row(std::ostream& out, const ConfidenceIntervals& ci, Eigen::Index j) {
  const double se = std::sqrt(std::max(ci.covariance(j, j), 0.0));
  out << format_double(ci.estimate(j)) << ',' << format_double(se) << ',' << format_double(ci.lower(j)) << ','
      << format_double(ci.upper(j));
}

void cmd_infer(const InferOptions& o, Context& ctx) {
  const Panel panel = read_panel(o.panel);
  const SmoothConfig scfg = smooth_config(o.bandwidth_exponent, panel.periods());
  FactorFit fit;
  if (!o.fit.empty()) {
    fit = load_fit(o.fit);
    if (fit.F.rows() != panel.periods() || fit.loadings.front().rows() != panel.series()) {
      throw InvalidArgument("--fit does not match the panel dimensions");
    }
  } else {
    fit = fit_smoothed_dafm(panel, build_grid(o.est.levels, o.est.weights), fit_config(o.est, *ctx.common), scfg);
    save_fit(fit, ctx.out / "fit");
    ctx.record.outputs.push_back("fit/");
  }
  const SmoothConfig plug = inference_config(fit, panel, scfg, o.plugin_multiplier);
  ctx.record.details["smoothing_bandwidth"] = scfg.bandwidth;
  ctx.record.details["plugin_bandwidth"] = plug.bandwidth;
  fs::create_directories(ctx.out);

  const Eigen::Index r = fit.F.cols();
  std::size_t failures = 0;
  {
    auto out = open_output(ctx.out / "factor_ci.csv");
    out << "t,time,component,estimate,se,lower,upper,positive_definite\n";
    for (Eigen::Index t = 0; t < panel.periods(); ++t) {
      try {
        const ConfidenceIntervals ci = factor_ci(fit, panel, plug, t, o.level);
        for (Eigen::Index j = 0; j < r; ++j) {
          out << t + 1 << ',' << panel.time_labels()[static_cast<std::size_t>(t)] << ',' << j + 1 << ',';
          write_interval_row(out, ci, j);
          out << ",true\n";
        }
      } catch (const NumericalError&) {
        ++failures;
        for (Eigen::Index j = 0; j < r; ++j) {
          out << t + 1 << ',' << panel.time_labels()[static_cast<std::size_t>(t)] << ',' << j + 1 << ','
              << format_double(fit.F(t, j)) << ",nan,nan,nan,false\n";
        }
      }
    }
  }
  ctx.record.outputs.push_back("factor_ci.csv");
  if (o.loadings) {
    auto out = open_output(ctx.out / "loading_ci.csv");
    out << "k,tau,series,component,estimate,se,lower,upper,positive_definite\n";
    for (std::size_t k = 0; k < fit.grid.size(); ++k) {
      for (Eigen::Index i = 0; i < panel.series(); ++i) {
        const std::string prefix = std::to_string(k + 1) + ',' + format_double(fit.grid.level(k)) + ',' +
                                   panel.series_ids()[static_cast<std::size_t>(i)] + ',';
        try {
          const ConfidenceIntervals ci = loading_ci(fit, panel, plug, k, i, o.level);
          for (Eigen::Index j = 0; j < r; ++j) {
            out << prefix << j + 1 << ',';
            write_interval_row(out, ci, j);
            out << ",true\n";
          }
        } catch (const NumericalError&) {
          ++failures;
          for (Eigen::Index j = 0; j < r; ++j) {
            out << prefix << j + 1 << ',' << format_double(fit.loadings[k](i, j)) << ",nan,nan,nan,false\n";
          }
        }
      }
    }
    ctx.record.outputs.push_back("loading_ci.csv");
  }
  ctx.record.details["non_positive_definite"] = failures;
  if (failures > 0) log_warning(std::to_string(failures) + " plug-in matrices were not positive definite (rows marked)");
}

struct ForecastOptions {
  PanelOptions panel;
  EstimatorOptions est;
  std::string target;
  std::string target_column;
  std::string transform = "level";
  Eigen::Index window = 120;
  std::string horizons = "1";
  int max_lag = 4;
  std::string method = "ar+factors";
};

void cmd_forecast(const ForecastOptions& o, Context& ctx) {
  Panel panel = read_panel(o.panel);
  Eigen::VectorXd y;
  if (!o.target.empty()) {
    const Panel target = load_panel(o.target);
    Eigen::Index col = 0;
    if (!o.target_column.empty()) {
      const auto& ids = target.series_ids();
      const auto it = std::find(ids.begin(), ids.end(), o.target_column);
      if (it == ids.end()) throw InvalidArgument("--target-column '" + o.target_column + "' not found in --target");
      col = it - ids.begin();
    }
    y = target.values().col(col);
  } else if (!o.target_column.empty()) {
    const auto& ids = panel.series_ids();
    const auto it = std::find(ids.begin(), ids.end(), o.target_column);
    if (it == ids.end()) throw InvalidArgument("--target-column '" + o.target_column + "' not found in --panel");
    y = panel.values().col(it - ids.begin());
  } else {
    throw InvalidArgument("forecast needs --target or --target-column");
  }
  const TransformCode code = parse_transform_code(o.transform);
  y = apply_transform(y, code);
  if (y.size() > panel.periods()) throw InvalidArgument("target is longer than the panel");
  if (y.size() < panel.periods()) panel = panel.slice_rows(panel.periods() - y.size(), y.size());

  const QuantileGrid grid = build_grid(o.est.levels, o.est.weights);
  const FitConfig cfg = fit_config(o.est, *ctx.common);
  WindowFactorCache cache(panel, o.window, grid, cfg);
  fs::create_directories(ctx.out);
  auto points = open_output(ctx.out / "forecasts.csv");
  points << "origin,time,horizon,lags,forecast,benchmark,actual,missing\n";
  auto summary = open_output(ctx.out / "summary.csv");
  summary << "horizon,count,missing,relative_mse\n";
  nlohmann::json rel = nlohmann::json::object();
  for (const double hd : parse_numbers(o.horizons, "--horizons")) {
    ForecastTask task;
    task.horizon = static_cast<Eigen::Index>(hd);
    if (static_cast<double>(task.horizon) != hd) throw InvalidArgument("--horizons must be integers");
    task.window = o.window;
    task.max_lag = o.max_lag;
    task.method = parse_forecast_method(o.method);
    const ForecastResult res = rolling_forecast(panel, y, task, cache);
    for (const auto& p : res.points) {
      points << p.origin + 1 << ',' << p.origin_label << ',' << p.horizon << ',' << p.lags << ','
             << format_double(p.forecast) << ',' << format_double(p.benchmark) << ',' << format_double(p.actual)
             << ',' << (p.missing ? "true" : "false") << "\n";
      if (p.missing) log_warning("origin " + p.origin_label + ": " + p.error);
    }
    summary << task.horizon << ',' << res.points.size() << ',' << res.missing << ','
            << format_double(res.relative_mse) << "\n";
    rel[std::to_string(task.horizon)] = res.relative_mse;
  }
  ctx.record.outputs = {"forecasts.csv", "summary.csv"};
  ctx.record.details["relative_mse"] = rel;
  ctx.record.details["seed"] = o.est.seed;
}

struct EvalSimOptions {
  int table = 2;
  std::string dist = "gaussian";
  std::string sizes = "50x50";
  int reps = 10;
  std::string methods = "dafm,qfm:0.5";
  std::string levels = "0.1,0.3,0.5,0.7,0.9";
  std::string weights = "uniform";
  int r = 0;
  double tol = 1e-6;
  int max_outer = 100;
  int starts = 3;
  std::uint64_t seed = 1;
};

struct SimMethod {
  std::string name;
  enum { dafm, qfm, pca } kind;
  double tau = 0.5;
};

std::vector<SimMethod> parse_methods(const std::string& text) {
  std::vector<SimMethod> out;
  for (const auto& m : split_list(text)) {
    if (m == "dafm") {
      out.push_back({m, SimMethod::dafm});
    } else if (m == "pca") {
      out.push_back({m, SimMethod::pca});
    } else if (m.rfind("qfm:", 0) == 0) {
      out.push_back({m, SimMethod::qfm, to_double(m.substr(4), "--methods")});
    } else {
      throw InvalidArgument("unknown method '" + m + "' (expected dafm, qfm:<tau> or pca)");
    }
  }
  if (out.empty()) throw InvalidArgument("--methods is empty");
  return out;
}

std::pair<Eigen::Index, Eigen::Index> parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw InvalidArgument("--sizes entries look like NxT, got '" + text + "'");
  const double n = to_double(text.substr(0, x), "--sizes");
  const double t = to_double(text.substr(x + 1), "--sizes");
  if (n < 1 || t < 1 || n != std::floor(n) || t != std::floor(t)) throw InvalidArgument("bad size '" + text + "'");
  return {static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t)};
}

void cmd_eval_sim(const EvalSimOptions& o, Context& ctx) {
  if (o.table != 1 && o.table != 2) throw InvalidArgument("--table must be 1 (location-shift) or 2 (location-scale)");
  if (o.reps < 1) throw InvalidArgument("--reps must be at least 1");
  const Dgp dgp = o.table == 1 ? Dgp::location_shift : Dgp::location_scale_shift;
  const ErrorDist dist = parse_dist(o.dist);
  const auto methods = parse_methods(o.methods);
  QuantileGrid grid(parse_numbers(o.levels, "--levels"));
  if (o.weights == "density") {
    grid = density_weights(dist, grid);
  } else {
    grid = build_grid(o.levels, o.weights);
  }
  const fs::path reps_dir = ctx.out / "reps";
  fs::create_directories(reps_dir);
  auto table = open_output(ctx.out / "table.csv");
  table << "method,N,T,reps,f1,f2,f3\n";
  nlohmann::json seeds = nlohmann::json::array();

  for (const auto& size_text : split_list(o.sizes)) {
    const auto [n, t] = parse_size(size_text);
    const std::size_t m = methods.size();
    std::vector<Eigen::MatrixXd> r2(static_cast<std::size_t>(o.reps));
    std::vector<std::uint64_t> rep_seeds(static_cast<std::size_t>(o.reps));
    for (int rep = 0; rep < o.reps; ++rep) rep_seeds[static_cast<std::size_t>(rep)] = derive_seed(o.seed, static_cast<std::uint64_t>(rep));
    parallel_for(static_cast<std::size_t>(o.reps), ctx.common->jobs, [&](std::size_t rep) {
      const SimData data = generate(dgp, n, t, dist, rep_seeds[rep]);
      FitConfig cfg;
      cfg.r = o.r > 0 ? o.r : data.truth.dafm_rank();
      cfg.tol = o.tol;
      cfg.max_outer = o.max_outer;
      cfg.starts = o.starts;
      cfg.seed = rep_seeds[rep];
      Eigen::MatrixXd row(static_cast<Eigen::Index>(m), 3);
      for (std::size_t j = 0; j < m; ++j) {
        Eigen::MatrixXd f;
        switch (methods[j].kind) {
          case SimMethod::dafm: f = fit_dafm(data.panel, grid, cfg).F; break;
          case SimMethod::qfm: f = fit_qfm(data.panel, methods[j].tau, cfg).F; break;
          case SimMethod::pca: f = mean_pca(data.panel, cfg.r).F; break;
        }
        row.row(static_cast<Eigen::Index>(j)) = adjusted_r2_all(data.truth.F0, f).transpose();
      }
      // One file per replication, merged below in replication order.
      auto out = open_output(reps_dir / (size_text + "_rep" + std::to_string(rep + 1) + ".csv"));
      out << "method,f1,f2,f3\n";
      for (std::size_t j = 0; j < m; ++j) {
        out << methods[j].name;
        for (Eigen::Index c = 0; c < 3; ++c) out << ',' << format_double(row(static_cast<Eigen::Index>(j), c));
        out << "\n";
      }
      r2[rep] = row;
    });
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), 3);
    for (const auto& row : r2) mean += row;
    mean /= static_cast<double>(o.reps);
    for (std::size_t j = 0; j < m; ++j) {
      table << methods[j].name << ',' << n << ',' << t << ',' << o.reps;
      for (Eigen::Index c = 0; c < 3; ++c) table << ',' << format_double(mean(static_cast<Eigen::Index>(j), c));
      table << "\n";
    }
    for (auto s : rep_seeds) seeds.push_back(s);
  }
  ctx.record.outputs = {"table.csv", "reps/"};
  ctx.record.details["replication_seeds"] = seeds;
}

struct RerunOptions {
  std::string manifest;
  std::string out;
};

// ---------------------------------------------------------------- driver

/// Builds the argument list for `command`: config entries first, then the
/// user's flags, so that flags win (every option keeps its last value).
std::vector<std::string> with_config(const std::vector<std::string>& args, CLI::App* sub) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  std::vector<std::string> out;
  if (args.empty()) return out;
  out.push_back(args.front());
  if (!path.empty()) {
    for (const auto& [key, value] : load_config_file(path)) {
      const CLI::Option* opt = sub->get_option_no_throw("--" + key);
      if (!opt || key == "config" || key == "help") throw InvalidArgument("config file " + path + ": unknown key '" + key + "'");
      if (opt->get_expected_max() == 0) {
        if (value == "true" || value == "1") out.push_back("--" + key);
        else if (value != "false" && value != "0") throw InvalidArgument("config key '" + key + "' expects true or false");
      } else if (!value.empty()) {
        out.push_back("--" + key);
        out.push_back(value);
      }
    }
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

int run_impl(const std::vector<std::string>& args) {
  CLI::App app{"Distributional quantile factor models: simulation, estimation, rank selection, inference and forecasting",
               "dafm"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", library_version());

  std::map<std::string, std::pair<Common*, std::function<void(Context&)>>> handlers;
  std::vector<std::unique_ptr<Common>> commons;
  auto make = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    commons.push_back(std::make_unique<Common>());
    add_common(sub, *commons.back());
    return sub;
  };

  SimulateOptions sim;
  {
    CLI::App* sub = make("simulate", "generate a simulated panel and its true factors");
    sub->add_option("--dgp", sim.dgp, "location-shift or location-scale");
    sub->add_option("--dist", sim.dist, "gaussian, t2, mixture, skewt or a parameterized form such as t(3)");
    sub->add_option("--n", sim.n, "number of series N");
    sub->add_option("--t", sim.t, "number of periods T");
    sub->add_option("--seed", sim.seed, "master seed");
    handlers["simulate"] = {commons.back().get(), [&](Context& c) { cmd_simulate(sim, c); }};
  }
  FitOptions fit;
  {
    CLI::App* sub = make("fit", "estimate the factor model over a grid of quantile levels");
    add_panel(sub, fit.panel);
    add_estimator(sub, fit.est, true);
    sub->add_flag("--smooth", fit.smooth, "minimize the kernel-smoothed objective instead");
    sub->add_option("--bandwidth-exponent", fit.bandwidth_exponent, "c in h = T^-c, 0 = default");
    handlers["fit"] = {commons.back().get(), [&](Context& c) { cmd_fit(fit, c); }};
  }
  FitQfmOptions qfm;
  {
    CLI::App* sub = make("fit-qfm", "estimate a single-level quantile factor model");
    add_panel(sub, qfm.panel);
    add_estimator(sub, qfm.est, false);
    sub->add_option("--tau", qfm.tau, "quantile level");
    handlers["fit-qfm"] = {commons.back().get(), [&](Context& c) { cmd_fit_qfm(qfm, c); }};
  }
  RankOptions rank;
  {
    CLI::App* sub = make("rank", "select the number of factors");
    add_panel(sub, rank.panel);
    add_estimator(sub, rank.est, true);
    sub->add_option("--method", rank.method, "ic or eigen");
    sub->add_option("--smax", rank.smax, "largest candidate count, 0 = min(8, min(N,T)/3)");
    sub->add_option("--penalty", rank.penalty, "IC penalty, 0 = default");
    sub->add_option("--thresholds", rank.thresholds, "eigen thresholds (one, or one per level), empty = default");
    handlers["rank"] = {commons.back().get(), [&](Context& c) { cmd_rank(rank, c); }};
  }
  InferOptions infer;
  {
    CLI::App* sub = make("infer", "confidence intervals for factors and loadings");
    add_panel(sub, infer.panel);
    add_estimator(sub, infer.est, true);
    sub->add_option("--fit", infer.fit, "existing fit directory (default: fit the smoothed model)");
    sub->add_option("--level", infer.level, "confidence level");
    sub->add_option("--bandwidth-exponent", infer.bandwidth_exponent, "c in h = T^-c, 0 = default");
    sub->add_option("--plugin-multiplier", infer.plugin_multiplier, "density plug-in bandwidth multiplier");
    sub->add_option("--loadings", infer.loadings, "also write loading intervals (true/false)");
    handlers["infer"] = {commons.back().get(), [&](Context& c) { cmd_infer(infer, c); }};
  }
  ForecastOptions fc;
  {
    CLI::App* sub = make("forecast", "rolling-window factor-augmented AR forecasts");
    add_panel(sub, fc.panel);
    add_estimator(sub, fc.est, true);
    sub->add_option("--target", fc.target, "CSV holding the target series (first column unless --target-column)");
    sub->add_option("--target-column", fc.target_column, "target column name (in --target, else in --panel)");
    sub->add_option("--transform", fc.transform, "stationarity transform of the target");
    sub->add_option("--window", fc.window, "rolling window length");
    sub->add_option("--horizons", fc.horizons, "comma-separated forecast horizons");
    sub->add_option("--max-lag", fc.max_lag, "largest lag order considered by BIC");
    sub->add_option("--method", fc.method, "ar or ar+factors");
    handlers["forecast"] = {commons.back().get(), [&](Context& c) { cmd_forecast(fc, c); }};
  }
  EvalSimOptions ev;
  {
    CLI::App* sub = make("eval-sim", "Monte Carlo factor recovery table");
    sub->add_option("--table", ev.table, "1 = location-shift, 2 = location-scale");
    sub->add_option("--dist", ev.dist, "error distribution");
    sub->add_option("--sizes", ev.sizes, "comma-separated NxT sizes");
    sub->add_option("--reps", ev.reps, "replications per size");
    sub->add_option("--methods", ev.methods, "comma-separated: dafm, qfm:<tau>, pca");
    sub->add_option("--levels", ev.levels, "quantile levels for dafm");
    sub->add_option("--weights", ev.weights, "uniform, density, low2x, med2x, high2x or a list");
    sub->add_option("--r", ev.r, "factor count, 0 = the DGP's own");
    sub->add_option("--tol", ev.tol, "relative objective-change tolerance");
    sub->add_option("--max-outer", ev.max_outer, "outer iteration cap");
    sub->add_option("--starts", ev.starts, "starts per fit, the lowest objective is kept");
    sub->add_option("--seed", ev.seed, "master seed");
    handlers["eval-sim"] = {commons.back().get(), [&](Context& c) { cmd_eval_sim(ev, c); }};
  }
  RerunOptions rerun;
  CLI::App* rerun_sub = app.add_subcommand("rerun", "repeat the run recorded in a manifest");
  rerun_sub->add_option("manifest", rerun.manifest, "manifest.json")->required();
  rerun_sub->add_option("--out", rerun.out, "output directory (default: the recorded one)");

  std::vector<std::string> full = args;
  if (!args.empty()) {
    if (CLI::App* sub = app.get_subcommand_no_throw(args.front()); sub && sub != rerun_sub) {
      full = with_config(args, sub);
    }
  }
  std::vector<std::string> reversed(full.rbegin(), full.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? success : usage_error;
  }

  if (rerun_sub->parsed()) {
    std::ifstream in(rerun.manifest);
    if (!in) throw InvalidArgument("cannot open manifest " + rerun.manifest);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("invalid manifest: " + std::string(e.what()));
    }
    if (!j.contains("command") || !j["command"].is_string()) throw InvalidArgument("manifest lacks a command");
    std::vector<std::string> again{j["command"].get<std::string>(), "--config", rerun.manifest};
    if (!rerun.out.empty()) {
      again.push_back("--out");
      again.push_back(rerun.out);
    }
    return run_impl(again);
  }

  for (auto& [name, handler] : handlers) {
    CLI::App* sub = app.get_subcommand(name);
    if (!sub->parsed()) continue;
    Common& common = *handler.first;
    set_log_level(common.quiet ? LogLevel::quiet : common.verbose ? LogLevel::info : LogLevel::warning);
    Context ctx;
    ctx.sub = sub;
    ctx.common = &common;
    ctx.out = resolve_out(common.out, name);
    ctx.record.command = name;
    ctx.record.argv = args;
    ctx.record.config = resolved_config(sub, ctx.out);
    fs::create_directories(ctx.out);
    const auto start = std::chrono::steady_clock::now();
    handler.second(ctx);
    ctx.record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(ctx.record, ctx.out);
    return success;
  }
  return usage_error;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    return run_impl(args);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage_error;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return usage_error;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace dafm::cli
