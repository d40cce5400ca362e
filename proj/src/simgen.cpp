#include "dafm/simgen.hpp"

#include <cmath>
#include <string>

#include "dafm/error.hpp"
#include "dafm/random.hpp"

namespace dafm {
namespace {

// Sub-stream indices of a generator seed.
constexpr std::uint64_t kFactorStream = 0;  // 0, 1, 2 for the three factors
constexpr std::uint64_t kLoadingStream = 3;
constexpr std::uint64_t kErrorStream = 4;

void check_dims(Eigen::Index n, Eigen::Index t) {
  if (n < 1 || t < 1) throw InvalidArgument("simulation needs N >= 1 and T >= 1");
}

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = rng.normal();
  }
  return out;
}

Eigen::MatrixXd error_matrix(Eigen::Index t, Eigen::Index n, const ErrorDist& dist, std::uint64_t seed) {
  const Eigen::VectorXd draws = sample_error(dist, t * n, seed);
  return Eigen::Map<const Eigen::MatrixXd>(draws.data(), t, n);
}

}  // namespace

Dgp parse_dgp(std::string_view name) {
  if (name == "location-shift" || name == "ls") return Dgp::location_shift;
  if (name == "location-scale" || name == "location-scale-shift" || name == "lss") return Dgp::location_scale_shift;
  throw InvalidArgument("unknown DGP '" + std::string(name) + "' (location-shift or location-scale)");
}

std::string_view to_string(Dgp dgp) {
  return dgp == Dgp::location_shift ? "location-shift" : "location-scale";
}

int SimTruth::dafm_rank() const { return dgp == Dgp::location_shift ? 4 : 3; }

Eigen::MatrixXd SimTruth::dafm_factors() const {
  if (dgp == Dgp::location_scale_shift) return F0;
  Eigen::MatrixXd out(F0.rows(), 4);
  out.leftCols(3) = F0;
  out.col(3).setOnes();
  return out;
}

std::vector<Eigen::MatrixXd> SimTruth::dafm_loadings(const QuantileGrid& grid) const {
  std::vector<Eigen::MatrixXd> out;
  for (double tau : grid.levels()) {
    const double q = dist_quantile(dist, tau);
    if (dgp == Dgp::location_shift) {
      Eigen::MatrixXd l(loadings0.rows(), 4);
      l.leftCols(3) = loadings0;
      l.col(3).setConstant(q);
      out.push_back(std::move(l));
    } else {
      Eigen::MatrixXd l = loadings0;
      l.col(2) *= q;
      out.push_back(std::move(l));
    }
  }
  return out;
}

Eigen::VectorXd ar1_series(double phi, Eigen::Index t, std::uint64_t seed) {
  if (!(std::abs(phi) < 1.0)) throw InvalidArgument("AR(1) coefficient must satisfy |phi| < 1");
  if (t < 1) throw InvalidArgument("series length must be at least 1");
  Rng rng(seed);
  Eigen::VectorXd x(t);
  x(0) = rng.normal() / std::sqrt(1.0 - phi * phi);
  for (Eigen::Index i = 1; i < t; ++i) x(i) = phi * x(i - 1) + rng.normal();
  return x;
}

SimData gen_location_shift(Eigen::Index n, Eigen::Index t, const ErrorDist& dist, std::uint64_t seed) {
  check_dims(n, t);
  dist.validate();
  SimTruth truth;
  truth.dgp = Dgp::location_shift;
  truth.dist = dist;
  truth.seed = seed;
  truth.F0.resize(t, 3);
  const double phi[3] = {0.8, 0.5, 0.2};
  for (int j = 0; j < 3; ++j) truth.F0.col(j) = ar1_series(phi[j], t, derive_seed(seed, kFactorStream + j));
  truth.loadings0 = normal_matrix(n, 3, derive_seed(seed, kLoadingStream));
  Eigen::MatrixXd x = truth.F0 * truth.loadings0.transpose() + error_matrix(t, n, dist, derive_seed(seed, kErrorStream));
  return {Panel(std::move(x)), std::move(truth)};
}

SimData gen_location_scale_shift(Eigen::Index n, Eigen::Index t, const ErrorDist& dist, std::uint64_t seed) {
  check_dims(n, t);
  dist.validate();
  SimTruth truth;
  truth.dgp = Dgp::location_scale_shift;
  truth.dist = dist;
  truth.seed = seed;
  truth.F0.resize(t, 3);
  truth.F0.col(0) = ar1_series(0.8, t, derive_seed(seed, kFactorStream));
  truth.F0.col(1) = ar1_series(0.5, t, derive_seed(seed, kFactorStream + 1));
  truth.F0.col(2) = normal_matrix(t, 1, derive_seed(seed, kFactorStream + 2)).col(0).cwiseAbs();
  truth.loadings0 = normal_matrix(n, 3, derive_seed(seed, kLoadingStream));
  truth.loadings0.col(2) = truth.loadings0.col(2).cwiseAbs();
  const Eigen::MatrixXd e = error_matrix(t, n, dist, derive_seed(seed, kErrorStream));
  Eigen::MatrixXd x = truth.F0.leftCols(2) * truth.loadings0.leftCols(2).transpose();
  x.array() += (truth.F0.col(2) * truth.loadings0.col(2).transpose()).array() * e.array();
  return {Panel(std::move(x)), std::move(truth)};
}

SimData generate(Dgp dgp, Eigen::Index n, Eigen::Index t, const ErrorDist& dist, std::uint64_t seed) {
  return dgp == Dgp::location_shift ? gen_location_shift(n, t, dist, seed)
                                    : gen_location_scale_shift(n, t, dist, seed);
}

}  // namespace dafm
