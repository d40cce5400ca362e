#include "dafm/distributions.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "dafm/error.hpp"
#include "dafm/panel.hpp"

namespace dafm {
namespace {

double skew_delta(const ErrorDist& d) { return d.alpha / std::sqrt(1.0 + d.alpha * d.alpha); }

double raw_pdf(const ErrorDist& d, double x) {
  switch (d.kind) {
    case DistKind::gaussian:
      return boost::math::pdf(boost::math::normal_distribution<>(d.mu, d.sigma), x);
    case DistKind::student_t:
      return boost::math::pdf(boost::math::students_t_distribution<>(d.df), x);
    case DistKind::gauss_mixture:
      return d.p * boost::math::pdf(boost::math::normal_distribution<>(d.mu1, std::sqrt(d.var1)), x) +
             (1.0 - d.p) * boost::math::pdf(boost::math::normal_distribution<>(d.mu2, std::sqrt(d.var2)), x);
    case DistKind::skew_t: {
      const double z = (x - d.xi) / d.omega;
      const double core = boost::math::pdf(boost::math::students_t_distribution<>(d.nu), z);
      const double arg = d.alpha * z * std::sqrt((d.nu + 1.0) / (d.nu + z * z));
      return 2.0 / d.omega * core * boost::math::cdf(boost::math::students_t_distribution<>(d.nu + 1.0), arg);
    }
  }
  return 0.0;
}

double raw_cdf(const ErrorDist& d, double x) {
  switch (d.kind) {
    case DistKind::gaussian:
      return boost::math::cdf(boost::math::normal_distribution<>(d.mu, d.sigma), x);
    case DistKind::student_t:
      return boost::math::cdf(boost::math::students_t_distribution<>(d.df), x);
    case DistKind::gauss_mixture:
      return d.p * boost::math::cdf(boost::math::normal_distribution<>(d.mu1, std::sqrt(d.var1)), x) +
             (1.0 - d.p) * boost::math::cdf(boost::math::normal_distribution<>(d.mu2, std::sqrt(d.var2)), x);
    case DistKind::skew_t: {
      // Integrate the standardized density over the shorter tail.
      const auto density = [&](double z) {
        const double core = boost::math::pdf(boost::math::students_t_distribution<>(d.nu), z);
        const double arg = d.alpha * z * std::sqrt((d.nu + 1.0) / (d.nu + z * z));
        return 2.0 * core * boost::math::cdf(boost::math::students_t_distribution<>(d.nu + 1.0), arg);
      };
      const double z = (x - d.xi) / d.omega;
      boost::math::quadrature::exp_sinh<double> integrator;
      if (z <= 0.0) {
        return integrator.integrate([&](double s) { return density(z - s); }, 0.0,
                                    std::numeric_limits<double>::infinity());
      }
      const double upper = integrator.integrate([&](double s) { return density(z + s); }, 0.0,
                                                std::numeric_limits<double>::infinity());
      return 1.0 - upper;
    }
  }
  return 0.0;
}

double raw_quantile(const ErrorDist& d, double tau) {
  switch (d.kind) {
    case DistKind::gaussian:
      return boost::math::quantile(boost::math::normal_distribution<>(d.mu, d.sigma), tau);
    case DistKind::student_t:
      return boost::math::quantile(boost::math::students_t_distribution<>(d.df), tau);
    case DistKind::gauss_mixture:
    case DistKind::skew_t:
      break;
  }
  // Bracket then refine with TOMS 748.
  double lo = -1.0;
  double hi = 1.0;
  const double scale = d.kind == DistKind::skew_t ? d.omega : std::sqrt(std::max(d.var1, d.var2));
  const double center = d.kind == DistKind::skew_t ? d.xi : 0.5 * (d.mu1 + d.mu2);
  lo = center - scale;
  hi = center + scale;
  for (int i = 0; i < 200 && raw_cdf(d, lo) > tau; ++i) lo -= 2.0 * (hi - lo);
  for (int i = 0; i < 200 && raw_cdf(d, hi) < tau; ++i) hi += 2.0 * (hi - lo);
  std::uintmax_t iterations = 200;
  const auto result = boost::math::tools::toms748_solve(
      [&](double v) { return raw_cdf(d, v) - tau; }, lo, hi, boost::math::tools::eps_tolerance<double>(50),
      iterations);
  return 0.5 * (result.first + result.second);
}

std::vector<double> parse_args(std::string_view inside, std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= inside.size()) {
    std::size_t comma = inside.find(',', start);
    if (comma == std::string_view::npos) comma = inside.size();
    std::string_view cell = inside.substr(start, comma - start);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw InvalidArgument("bad number '" + std::string(cell) + "' in distribution '" + std::string(text) + "'");
    }
    out.push_back(v);
    start = comma + 1;
  }
  return out;
}

}  // namespace

ErrorDist ErrorDist::gaussian(double mu, double sigma) {
  ErrorDist d;
  d.kind = DistKind::gaussian;
  d.mu = mu;
  d.sigma = sigma;
  d.validate();
  return d;
}

ErrorDist ErrorDist::student_t(double df) {
  ErrorDist d;
  d.kind = DistKind::student_t;
  d.df = df;
  d.validate();
  return d;
}

ErrorDist ErrorDist::mixture(double p, double mu1, double var1, double mu2, double var2) {
  ErrorDist d;
  d.kind = DistKind::gauss_mixture;
  d.p = p;
  d.mu1 = mu1;
  d.var1 = var1;
  d.mu2 = mu2;
  d.var2 = var2;
  d.validate();
  return d;
}

ErrorDist ErrorDist::skew_t(double xi, double omega, double alpha, double nu) {
  ErrorDist d;
  d.kind = DistKind::skew_t;
  d.xi = xi;
  d.omega = omega;
  d.alpha = alpha;
  d.nu = nu;
  d.validate();
  return d;
}

void ErrorDist::validate() const {
  switch (kind) {
    case DistKind::gaussian:
      if (!(sigma > 0.0) || !std::isfinite(mu)) throw InvalidArgument("gaussian: sigma must be positive");
      break;
    case DistKind::student_t:
      if (!(df > 0.0)) throw InvalidArgument("t: degrees of freedom must be positive");
      if (centered && !(df > 1.0)) throw InvalidArgument("t: centering requires df > 1 (finite mean)");
      break;
    case DistKind::gauss_mixture:
      if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("mixture: weight must lie in (0, 1)");
      if (!(var1 > 0.0 && var2 > 0.0)) throw InvalidArgument("mixture: variances must be positive");
      break;
    case DistKind::skew_t:
      if (!(omega > 0.0)) throw InvalidArgument("skew-t: omega must be positive");
      if (!(nu > 0.0)) throw InvalidArgument("skew-t: nu must be positive");
      if (centered && !(nu > 1.0)) throw InvalidArgument("skew-t: centering requires nu > 1 (finite mean)");
      break;
  }
}

std::string ErrorDist::describe() const {
  const auto f = [](double v) { return format_double(v); };
  std::string out;
  switch (kind) {
    case DistKind::gaussian: out = "gaussian(" + f(mu) + "," + f(sigma) + ")"; break;
    case DistKind::student_t: out = "t(" + f(df) + ")"; break;
    case DistKind::gauss_mixture:
      out = "mixture(" + f(p) + "," + f(mu1) + "," + f(var1) + "," + f(mu2) + "," + f(var2) + ")";
      break;
    case DistKind::skew_t: out = "skewt(" + f(xi) + "," + f(omega) + "," + f(alpha) + "," + f(nu) + ")"; break;
  }
  return out;
}

ErrorDist parse_dist(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) { return std::tolower(c); });
  std::string_view s = lowered;
  std::string_view name = s;
  std::vector<double> args;
  const std::size_t open = s.find('(');
  if (open != std::string_view::npos) {
    if (s.back() != ')') throw InvalidArgument("unbalanced parentheses in distribution '" + std::string(text) + "'");
    name = s.substr(0, open);
    args = parse_args(s.substr(open + 1, s.size() - open - 2), text);
  }
  const auto need = [&](std::size_t n) {
    if (args.size() != n) {
      throw InvalidArgument("distribution '" + std::string(text) + "' expects " + std::to_string(n) + " parameters");
    }
  };
  if (name == "gaussian" || name == "normal") {
    if (args.empty()) return ErrorDist::gaussian();
    need(2);
    return ErrorDist::gaussian(args[0], args[1]);
  }
  if (name == "t" || name == "student-t") {
    need(1);
    return ErrorDist::student_t(args[0]);
  }
  if (name.size() > 1 && name[0] == 't' && args.empty()) {
    return ErrorDist::student_t(parse_args(name.substr(1), text).at(0));
  }
  if (name == "mixture" || name == "gauss-mixture") {
    if (args.empty()) return ErrorDist::mixture(0.5, -2.0, 0.5, 2.0, 0.5);
    need(5);
    return ErrorDist::mixture(args[0], args[1], args[2], args[3], args[4]);
  }
  if (name == "skewt" || name == "skew-t") {
    if (args.empty()) return ErrorDist::skew_t(0.0, 4.0, 4.0, 3.0);
    need(4);
    return ErrorDist::skew_t(args[0], args[1], args[2], args[3]);
  }
  throw InvalidArgument("unknown distribution '" + std::string(text) +
                        "' (expected gaussian, t<df>, mixture or skewt)");
}

double dist_center(const ErrorDist& d) {
  switch (d.kind) {
    case DistKind::gaussian: return d.mu;
    case DistKind::student_t:
      if (!(d.df > 1.0)) throw InvalidArgument("t: mean does not exist for df <= 1");
      return 0.0;
    case DistKind::gauss_mixture: return d.p * d.mu1 + (1.0 - d.p) * d.mu2;
    case DistKind::skew_t: {
      if (!(d.nu > 1.0)) throw InvalidArgument("skew-t: mean does not exist for nu <= 1");
      const double ratio = std::exp(boost::math::lgamma(0.5 * (d.nu - 1.0)) - boost::math::lgamma(0.5 * d.nu));
      return d.xi + d.omega * skew_delta(d) * std::sqrt(d.nu / std::numbers::pi) * ratio;
    }
  }
  return 0.0;
}

double dist_pdf(const ErrorDist& d, double x) { return raw_pdf(d, d.centered ? x + dist_center(d) : x); }

double dist_cdf(const ErrorDist& d, double x) { return raw_cdf(d, d.centered ? x + dist_center(d) : x); }

double dist_quantile(const ErrorDist& d, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("quantile level must lie in (0, 1)");
  const double q = raw_quantile(d, tau);
  return d.centered ? q - dist_center(d) : q;
}

double draw_error(const ErrorDist& d, Rng& rng) {
  double x = 0.0;
  switch (d.kind) {
    case DistKind::gaussian: x = d.mu + d.sigma * rng.normal(); break;
    case DistKind::student_t: x = rng.student_t(d.df); break;
    case DistKind::gauss_mixture:
      x = rng.uniform() < d.p ? d.mu1 + std::sqrt(d.var1) * rng.normal() : d.mu2 + std::sqrt(d.var2) * rng.normal();
      break;
    case DistKind::skew_t: {
      const double delta = skew_delta(d);
      const double u0 = rng.normal();
      const double u1 = rng.normal();
      const double z = delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1;
      x = d.xi + d.omega * z / std::sqrt(rng.chi_squared(d.nu) / d.nu);
      break;
    }
  }
  return x;
}

Eigen::VectorXd sample_error(const ErrorDist& dist, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample size must be at least 1");
  dist.validate();
  const double center = dist.centered ? dist_center(dist) : 0.0;
  Rng rng(seed);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = draw_error(dist, rng) - center;
  return out;
}

QuantileGrid density_weights(const ErrorDist& dist, const QuantileGrid& grid) {
  dist.validate();
  std::vector<double> w;
  w.reserve(grid.size());
  for (double tau : grid.levels()) {
    const double v = dist_pdf(dist, dist_quantile(dist, tau));
    if (!(v >= 1e-300)) {
      throw NumericalError("density underflows at quantile level " + format_double(tau));
    }
    w.push_back(v);
  }
  return grid.with_weights(std::move(w));
}

WeightScheme parse_weight_scheme(std::string_view name) {
  if (name == "uniform") return WeightScheme::uniform;
  if (name == "low2x") return WeightScheme::low2x;
  if (name == "med2x") return WeightScheme::med2x;
  if (name == "high2x") return WeightScheme::high2x;
  throw InvalidArgument("unknown weight scheme '" + std::string(name) + "' (uniform, low2x, med2x, high2x)");
}

std::string_view to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::uniform: return "uniform";
    case WeightScheme::low2x: return "low2x";
    case WeightScheme::med2x: return "med2x";
    case WeightScheme::high2x: return "high2x";
  }
  return "uniform";
}

QuantileGrid weight_scheme(const QuantileGrid& grid, WeightScheme scheme) {
  const std::size_t K = grid.size();
  std::vector<double> w(K, 1.0);
  switch (scheme) {
    case WeightScheme::uniform: break;
    case WeightScheme::low2x:
      for (std::size_t k = 0; k < std::min<std::size_t>(2, K); ++k) w[k] = 2.0;
      break;
    case WeightScheme::high2x:
      for (std::size_t k = K - std::min<std::size_t>(2, K); k < K; ++k) w[k] = 2.0;
      break;
    case WeightScheme::med2x: {
      if (K < 3) throw InvalidArgument("med2x needs at least three quantile levels");
      std::size_t m = (K + 2) / 3;
      if ((K - m) % 2 != 0) ++m;
      const std::size_t first = (K - m) / 2;
      for (std::size_t k = first; k < first + m; ++k) w[k] = 2.0;
      break;
    }
  }
  return grid.with_weights(std::move(w));
}

}  // namespace dafm
