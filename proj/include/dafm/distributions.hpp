#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "dafm/quantile.hpp"
#include "dafm/random.hpp"

namespace dafm {

enum class DistKind { gaussian, student_t, gauss_mixture, skew_t };

/// Error distribution of the simulation designs. Parameters not used by
/// `kind` are ignored.
struct ErrorDist {
  DistKind kind = DistKind::gaussian;
  double mu = 0.0;     // gaussian mean
  double sigma = 1.0;  // gaussian sd
  double df = 2.0;     // student t
  double p = 0.5;      // mixture weight of the first component
  double mu1 = -2.0, var1 = 0.5, mu2 = 2.0, var2 = 0.5;
  double xi = 0.0, omega = 4.0, alpha = 4.0, nu = 3.0;  // skew t
  bool centered = true;  // subtract the theoretical center

  static ErrorDist gaussian(double mu = 0.0, double sigma = 1.0);
  static ErrorDist student_t(double df);
  static ErrorDist mixture(double p, double mu1, double var1, double mu2, double var2);
  static ErrorDist skew_t(double xi, double omega, double alpha, double nu);

  /// Validates parameters; throws InvalidArgument.
  void validate() const;
  std::string describe() const;
};

/// Parses "gaussian", "gaussian(mu,sigma)", "t2", "t(df)", "mixture",
/// "mixture(p,mu1,var1,mu2,var2)", "skewt", "skewt(xi,omega,alpha,nu)".
/// Bare names select the simulation defaults: N(0,1), t(2), the symmetric
/// two-component mixture with modes at -2 and 2, and skew-t(0, 4, 4, 3).
ErrorDist parse_dist(std::string_view text);

/// Theoretical mean, subtracted from raw draws when `centered` is set.
/// Throws InvalidArgument for t or skew-t with df <= 1 (no finite mean).
double dist_center(const ErrorDist& dist);

/// Density, distribution function and quantile function of the centered (if
/// requested) distribution.
double dist_pdf(const ErrorDist& dist, double x);
double dist_cdf(const ErrorDist& dist, double x);
double dist_quantile(const ErrorDist& dist, double tau);

double draw_error(const ErrorDist& dist, Rng& rng);
Eigen::VectorXd sample_error(const ErrorDist& dist, Eigen::Index n, std::uint64_t seed);

/// Weights w_k = pdf(quantile(tau_k)).
QuantileGrid density_weights(const ErrorDist& dist, const QuantileGrid& grid);

enum class WeightScheme { uniform, low2x, med2x, high2x };

WeightScheme parse_weight_scheme(std::string_view name);
std::string_view to_string(WeightScheme scheme);

/// Doubles the weights of the lowest two, middle, or highest two levels
/// (by position); uniform resets all weights to 1. The middle block holds
/// ceil(K/3) levels, widened by one when needed to centre it.
QuantileGrid weight_scheme(const QuantileGrid& grid, WeightScheme scheme);

}  // namespace dafm
