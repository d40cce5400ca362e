#include "dafm/quantile.hpp"

#include <cmath>
#include <limits>

#include "dafm/error.hpp"

namespace dafm {
namespace {

double horner(const Eigen::VectorXd& c, double s) {
  double v = 0.0;
  for (Eigen::Index j = c.size() - 1; j >= 0; --j) v = v * s + c(j);
  return v;
}

}  // namespace

Kernel::Kernel(int order, Eigen::VectorXd coefficients, bool conforming)
    : order_(order), conforming_(conforming), coef_(std::move(coefficients)) {
  const Eigen::Index n = coef_.size();
  if (n == 0) throw InvalidArgument("kernel needs at least one coefficient");
  dcoef_ = Eigen::VectorXd::Zero(std::max<Eigen::Index>(n - 1, 1));
  for (Eigen::Index j = 1; j < n; ++j) dcoef_(j - 1) = static_cast<double>(j) * coef_(j);
  icoef_ = Eigen::VectorXd::Zero(n + 1);
  for (Eigen::Index j = 0; j < n; ++j) icoef_(j + 1) = coef_(j) / static_cast<double>(j + 1);
  total_ = horner(icoef_, 1.0);
}

Kernel Kernel::epanechnikov() {
  Eigen::VectorXd c(3);
  c << 0.75, 0.0, -0.75;
  return Kernel(2, std::move(c), false);
}

double Kernel::density(double s) const {
  if (s <= -1.0 || s >= 1.0) return 0.0;
  return horner(coef_, s);
}

double Kernel::derivative(double s) const {
  if (s <= -1.0 || s >= 1.0) return 0.0;
  return horner(dcoef_, s);
}

double Kernel::survival(double e) const {
  if (e <= -1.0) return 1.0;
  if (e >= 1.0) return 0.0;
  return total_ - horner(icoef_, e);
}

Kernel build_kernel(int order) {
  if (order % 2 != 0) throw InvalidArgument("kernel order must be even");
  if (order < 8) throw InvalidArgument("kernel order must be at least 8 so that 1/m < c < 1/6 is possible");
  const int n = order / 2;
  // base_moment(j) = integral over [-1, 1] of s^(2j) (1 - s^2)^3.
  auto base_moment = [](int j) {
    const long double a = 2.0L * j;
    return 2.0L * (1.0L / (a + 1) - 3.0L / (a + 3) + 3.0L / (a + 5) - 1.0L / (a + 7));
  };
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> m(n, n);
  Eigen::Matrix<long double, Eigen::Dynamic, 1> rhs = Eigen::Matrix<long double, Eigen::Dynamic, 1>::Zero(n);
  rhs(0) = 1.0L;
  for (int l = 0; l < n; ++l) {
    for (int j = 0; j < n; ++j) m(l, j) = base_moment(j + l);
  }
  const Eigen::Matrix<long double, Eigen::Dynamic, 1> a = m.fullPivLu().solve(rhs);

  // Expand sum_j a_j s^(2j) (1 - 3 s^2 + 3 s^4 - s^6) into ascending powers of s.
  const int degree = 2 * (n - 1) + 6;
  Eigen::Matrix<long double, Eigen::Dynamic, 1> c = Eigen::Matrix<long double, Eigen::Dynamic, 1>::Zero(degree + 1);
  const long double base[4] = {1.0L, -3.0L, 3.0L, -1.0L};
  for (int j = 0; j < n; ++j) {
    for (int b = 0; b < 4; ++b) c(2 * j + 2 * b) += a(j) * base[b];
  }
  return Kernel(order, c.cast<double>(), true);
}

double default_bandwidth_exponent(int order) { return 0.5 * (1.0 / order + 1.0 / 6.0); }

SmoothConfig SmoothConfig::from_exponent(Kernel kernel, double exponent, Eigen::Index periods) {
  const double lo = 1.0 / kernel.order();
  if (!(exponent > lo && exponent < 1.0 / 6.0)) {
    throw InvalidArgument("bandwidth exponent must satisfy 1/m < c < 1/6 (m = " + std::to_string(kernel.order()) +
                          ")");
  }
  if (periods < 2) throw InvalidArgument("bandwidth needs T >= 2");
  const double h = std::pow(static_cast<double>(periods), -exponent);
  return SmoothConfig{std::move(kernel), exponent, h};
}

SmoothConfig SmoothConfig::with_bandwidth(Kernel kernel, double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InvalidArgument("bandwidth must be positive");
  return SmoothConfig{std::move(kernel), std::numeric_limits<double>::quiet_NaN(), bandwidth};
}

SmoothConfig SmoothConfig::standard(Eigen::Index periods) {
  return from_exponent(build_kernel(8), default_bandwidth_exponent(8), periods);
}

double smoothed_check_loss(double e, double tau, const SmoothConfig& cfg) {
  const double h = cfg.bandwidth;
  if (e >= h) return tau * e;
  if (e <= -h) return (tau - 1.0) * e;
  return (tau - cfg.kernel.survival(e / h)) * e;
}

double smoothed_check_derivative(double e, double tau, const SmoothConfig& cfg) {
  const double h = cfg.bandwidth;
  if (e >= h) return tau;
  if (e <= -h) return tau - 1.0;
  const double u = e / h;
  return tau - cfg.kernel.survival(u) + u * cfg.kernel.density(u);
}

double smoothed_check_second_derivative(double e, const SmoothConfig& cfg) {
  const double h = cfg.bandwidth;
  if (e >= h || e <= -h) return 0.0;
  const double u = e / h;
  return (2.0 * cfg.kernel.density(u) + u * cfg.kernel.derivative(u)) / h;
}

}  // namespace dafm
