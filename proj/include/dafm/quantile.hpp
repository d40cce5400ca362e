#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dafm {

/// Quantile levels 0 < tau_1 < ... < tau_K < 1 with positive weights.
class QuantileGrid {
 public:
  /// Throws InvalidArgument on empty, unsorted, duplicated or out-of-range
  /// levels, on non-positive weights, or on a length mismatch. Empty weights
  /// mean uniform weights of 1.
  explicit QuantileGrid(std::vector<double> levels, std::vector<double> weights = {});

  /// The five-level grid 0.1, 0.3, 0.5, 0.7, 0.9 with unit weights.
  static QuantileGrid standard();
  static QuantileGrid single(double tau);

  const std::vector<double>& levels() const { return levels_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return levels_.size(); }
  double level(std::size_t k) const { return levels_[k]; }
  double weight(std::size_t k) const { return weights_[k]; }

  QuantileGrid with_weights(std::vector<double> weights) const;

  /// 1-based index of the level closest to 0.5 (first one on ties).
  std::size_t median_index() const;

  friend bool operator==(const QuantileGrid&, const QuantileGrid&) = default;

 private:
  std::vector<double> levels_;
  std::vector<double> weights_;
};

/// Check function rho_tau(e) = (tau - 1{e <= 0}) e.
inline double check_loss(double e, double tau) { return e > 0.0 ? tau * e : (tau - 1.0) * e; }

/// Polynomial kernel on [-1, 1] (zero outside).
class Kernel {
 public:
  /// coefficients are ascending powers of s.
  Kernel(int order, Eigen::VectorXd coefficients, bool conforming);

  /// Order-2 Epanechnikov kernel 0.75 (1 - s^2). Does not admit a valid
  /// bandwidth exponent; intended for tests of the smoothing machinery.
  static Kernel epanechnikov();

  int order() const { return order_; }
  bool conforming() const { return conforming_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }

  double density(double s) const;     // k(s)
  double derivative(double s) const;  // k'(s)
  /// Survival function K(e) = integral of k over [e, 1].
  double survival(double e) const;

 private:
  int order_;
  bool conforming_;
  Eigen::VectorXd coef_;
  Eigen::VectorXd dcoef_;
  Eigen::VectorXd icoef_;  // antiderivative, zero constant term
  double total_ = 0.0;     // antiderivative evaluated at 1
};

/// Symmetric kernel of even order m >= 8: a polynomial in s^2 times the
/// triweight base (1 - s^2)^3, with coefficients chosen so that the zeroth
/// moment is one and moments 1..m-1 vanish. The base makes k vanish to
/// second order at +-1, so k is C^2 on the real line.
Kernel build_kernel(int order = 8);

/// Kernel plus bandwidth h. from_exponent enforces 1/m < c < 1/6.
struct SmoothConfig {
  Kernel kernel;
  double bandwidth_exponent;  // c, NaN when the bandwidth was set directly
  double bandwidth;           // h

  static SmoothConfig from_exponent(Kernel kernel, double exponent, Eigen::Index periods);
  static SmoothConfig with_bandwidth(Kernel kernel, double bandwidth);
  /// Order-8 kernel with c at the midpoint of (1/8, 1/6).
  static SmoothConfig standard(Eigen::Index periods);
};

double default_bandwidth_exponent(int order);

/// (tau - K(e/h)) e; identical to check_loss when |e| >= h.
double smoothed_check_loss(double e, double tau, const SmoothConfig& cfg);
/// First derivative in e: tau - K(u) + u k(u), u = e/h.
double smoothed_check_derivative(double e, double tau, const SmoothConfig& cfg);
/// Second derivative in e: (2/h) k(u) + (u/h) k'(u).
double smoothed_check_second_derivative(double e, const SmoothConfig& cfg);

}  // namespace dafm
