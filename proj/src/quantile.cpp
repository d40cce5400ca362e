#include "dafm/quantile.hpp"

#include <cmath>
#include <limits>

#include "dafm/error.hpp"

namespace dafm {

QuantileGrid::QuantileGrid(std::vector<double> levels, std::vector<double> weights)
    : levels_(std::move(levels)), weights_(std::move(weights)) {
  if (levels_.empty()) throw InvalidArgument("quantile grid needs at least one level");
  if (weights_.empty()) weights_.assign(levels_.size(), 1.0);
  if (weights_.size() != levels_.size()) throw InvalidArgument("weights and levels differ in length");
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    if (!(levels_[k] > 0.0 && levels_[k] < 1.0)) {
      throw InvalidArgument("quantile level must lie in (0, 1): " + std::to_string(levels_[k]));
    }
    if (k > 0 && !(levels_[k] > levels_[k - 1])) {
      throw InvalidArgument("quantile levels must be strictly increasing (duplicates are rejected)");
    }
    if (!(weights_[k] > 0.0) || !std::isfinite(weights_[k])) {
      throw InvalidArgument("quantile weights must be positive and finite");
    }
  }
}

QuantileGrid QuantileGrid::standard() { return QuantileGrid({0.1, 0.3, 0.5, 0.7, 0.9}); }

QuantileGrid QuantileGrid::single(double tau) { return QuantileGrid({tau}, {1.0}); }

QuantileGrid QuantileGrid::with_weights(std::vector<double> weights) const {
  return QuantileGrid(levels_, std::move(weights));
}

std::size_t QuantileGrid::median_index() const {
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    const double d = std::abs(levels_[k] - 0.5);
    if (d < best_dist - 1e-15) {
      best = k;
      best_dist = d;
    }
  }
  return best + 1;
}

}  // namespace dafm
