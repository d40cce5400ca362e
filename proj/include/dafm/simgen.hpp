#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dafm/distributions.hpp"
#include "dafm/panel.hpp"
#include "dafm/quantile.hpp"

namespace dafm {

enum class Dgp { location_shift, location_scale_shift };

Dgp parse_dgp(std::string_view name);
std::string_view to_string(Dgp dgp);

/// Ground truth behind a simulated panel.
struct SimTruth {
  Dgp dgp = Dgp::location_shift;
  ErrorDist dist;
  std::uint64_t seed = 0;
  Eigen::MatrixXd F0;         // T x 3 true factors
  Eigen::MatrixXd loadings0;  // N x 3 true loadings

  /// Factor count of the quantile-factor representation: 4 for the location
  /// shift (a constant factor carries the error quantile), 3 otherwise.
  int dafm_rank() const;
  /// T x dafm_rank() factors of that representation.
  Eigen::MatrixXd dafm_factors() const;
  /// Loadings of that representation at each level of the grid.
  std::vector<Eigen::MatrixXd> dafm_loadings(const QuantileGrid& grid) const;
};

struct SimData {
  Panel panel;
  SimTruth truth;
};

/// X = l1 f1 + l2 f2 + l3 f3 + e with AR(1) factors (0.8, 0.5, 0.2) and
/// standard normal loadings.
SimData gen_location_shift(Eigen::Index n, Eigen::Index t, const ErrorDist& dist, std::uint64_t seed);

/// X = l1 f1 + l2 f2 + l3 f3 e with AR(1) f1, f2 (0.8, 0.5), f3 = |N(0,1)|
/// and l3 = |N(0,1)|.
SimData gen_location_scale_shift(Eigen::Index n, Eigen::Index t, const ErrorDist& dist, std::uint64_t seed);

SimData generate(Dgp dgp, Eigen::Index n, Eigen::Index t, const ErrorDist& dist, std::uint64_t seed);

/// Stationary Gaussian AR(1): x0 ~ N(0, 1/(1-phi^2)), then x_t = phi x_{t-1} + e_t.
Eigen::VectorXd ar1_series(double phi, Eigen::Index t, std::uint64_t seed);

}  // namespace dafm
