#include "dafm/qr_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dafm/error.hpp"
#include "dafm/linalg.hpp"
#include "qr_detail.hpp"

namespace dafm {
namespace {

constexpr double kStepScale = 0.99995;
constexpr int kMaxInteriorIterations = 100;

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
  }
  return step;
}

Eigen::VectorXd solve_normal(const Eigen::MatrixXd& a_t, const Eigen::VectorXd& q, const Eigen::VectorXd& rhs_vec) {
  // a_t is n x p (the transpose of the constraint matrix).
  const Eigen::MatrixXd weighted = a_t.array().colwise() * q.array();
  const Eigen::MatrixXd normal = a_t.transpose() * weighted;
  const Eigen::VectorXd rhs = weighted.transpose() * rhs_vec;
  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  return normal.completeOrthogonalDecomposition().solve(rhs);
}

/// Mehrotra predictor-corrector on the bounded dual of the check-loss
/// regression:  min c'a  s.t.  X'a = X'(1 - tau),  0 <= a <= 1, c = -y.
/// The multipliers of the equality constraint are minus the coefficients.
Eigen::VectorXd interior_point(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys, const Eigen::VectorXd& tau,
                               SolverStats& stats) {
  const Eigen::Index n = xs.rows();
  const Eigen::VectorXd c = -ys;
  Eigen::VectorXd a = (1.0 - tau.array()).matrix();
  Eigen::VectorXd s = tau;
  const Eigen::VectorXd b = xs.transpose() * a;

  Eigen::VectorXd pi = -linalg::least_squares(xs, ys).coef;
  Eigen::VectorXd r = c - xs * pi;
  const double shift = std::max(1e-8, 1e-2 * r.cwiseAbs().mean());
  Eigen::VectorXd z = r.cwiseMax(0.0).array() + shift;
  Eigen::VectorXd w = (-r).cwiseMax(0.0).array() + shift;

  const double scale = 1.0 + ys.cwiseAbs().sum();
  double gap = c.dot(a) - b.dot(pi) + w.sum();
  Eigen::VectorXd best = pi;
  int stalled = 0;
  int it = 0;
  for (; it < kMaxInteriorIterations && gap > 1e-11 * scale && stalled < 2; ++it) {
    const Eigen::VectorXd q = (z.array() / a.array() + w.array() / s.array()).inverse();
    r = z - w;

    // Affine scaling direction.
    Eigen::VectorXd dpi = solve_normal(xs, q, r);
    Eigen::VectorXd da = (q.array() * ((xs * dpi).array() - r.array())).matrix();
    Eigen::VectorXd ds = -da;
    Eigen::VectorXd dz = (-z.array() * (1.0 + da.array() / a.array())).matrix();
    Eigen::VectorXd dw = (-w.array() * (1.0 + ds.array() / s.array())).matrix();

    double fp = std::min(1.0, kStepScale * std::min(max_step(a, da), max_step(s, ds)));
    double fd = std::min(1.0, kStepScale * std::min(max_step(z, dz), max_step(w, dw)));

    if (std::min(fp, fd) < 1.0) {
      const double mu = a.dot(z) + s.dot(w);
      const double g = (a + fp * da).dot(z + fd * dz) + (s + fp * ds).dot(w + fd * dw);
      const double target = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
      const Eigen::ArrayXd dadz = da.array() * dz.array();
      const Eigen::ArrayXd dsdw = ds.array() * dw.array();
      const Eigen::VectorXd rhs =
          ((target - dadz) / a.array() - (target - dsdw) / s.array() - r.array()).matrix();
      dpi = -solve_normal(xs, q, rhs);
      da = (q.array() * ((xs * dpi).array() + rhs.array())).matrix();
      ds = -da;
      dz = ((target - dadz) / a.array() - z.array() - z.array() / a.array() * da.array()).matrix();
      dw = ((target - dsdw) / s.array() - w.array() - w.array() / s.array() * ds.array()).matrix();
      fp = std::min(1.0, kStepScale * std::min(max_step(a, da), max_step(s, ds)));
      fd = std::min(1.0, kStepScale * std::min(max_step(z, dz), max_step(w, dw)));
    }
    a += fp * da;
    s += fp * ds;
    pi += fd * dpi;
    z += fd * dz;
    w += fd * dw;
    const double next_gap = c.dot(a) - b.dot(pi) + w.sum();
    if (!pi.allFinite() || !std::isfinite(next_gap)) break;
    // Round-off eventually stops the gap from shrinking; the descent polish
    // finishes from there.
    stalled = next_gap > 0.5 * gap ? stalled + 1 : 0;
    gap = next_gap;
    best = pi;
  }
  stats.interior_iterations = it;
  stats.duality_gap = gap;
  return -best;
}

double scaled_objective(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys, const Eigen::VectorXd& tau,
                        const Eigen::VectorXd& b) {
  const Eigen::VectorXd r = ys - xs * b;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += check_loss(r(i), tau(i));
  return total;
}

/// Picks p linearly independent rows, preferring the smallest |residual|.
bool initial_basis(const Eigen::MatrixXd& xs, const Eigen::VectorXd& resid, std::vector<Eigen::Index>& basis) {
  const Eigen::Index n = xs.rows();
  const Eigen::Index p = xs.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return std::abs(resid(i)) < std::abs(resid(j)); });
  basis.clear();
  Eigen::MatrixXd rows(0, p);
  const double tol = 1e-10 * std::max(1.0, xs.cwiseAbs().maxCoeff());
  // Orthonormal rows of the accepted set, for an O(p^2) independence test.
  Eigen::MatrixXd ortho(p, 0);
  for (Eigen::Index idx : order) {
    Eigen::VectorXd v = xs.row(idx).transpose();
    const double norm0 = v.norm();
    if (norm0 <= tol) continue;
    for (Eigen::Index j = 0; j < ortho.cols(); ++j) v -= ortho.col(j).dot(v) * ortho.col(j);
    for (Eigen::Index j = 0; j < ortho.cols(); ++j) v -= ortho.col(j).dot(v) * ortho.col(j);
    const double norm = v.norm();
    if (norm <= 1e-8 * norm0) continue;
    ortho.conservativeResize(Eigen::NoChange, ortho.cols() + 1);
    ortho.col(ortho.cols() - 1) = v / norm;
    basis.push_back(idx);
    if (static_cast<Eigen::Index>(basis.size()) == p) return true;
  }
  return false;
}

/// Simplex-type descent over basic solutions (p zero residuals). Moves along
/// the steepest improving edge with an exact line search until no edge
/// improves the objective. Returns false if no basis could be formed.
bool basic_descent(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys, const Eigen::VectorXd& tau,
                   const Eigen::VectorXd& start, Eigen::VectorXd& out, int& iterations) {
  const Eigen::Index n = xs.rows();
  const Eigen::Index p = xs.cols();
  std::vector<Eigen::Index> basis;
  if (!initial_basis(xs, ys - xs * start, basis)) return false;

  const double zero_tol = 1e-12 * (1.0 + ys.cwiseAbs().maxCoeff());
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  const int max_iter = static_cast<int>(10 * n + 50);
  std::vector<std::pair<double, Eigen::Index>> breaks;
  breaks.reserve(static_cast<std::size_t>(n));

  for (iterations = 0; iterations < max_iter; ++iterations) {
    Eigen::MatrixXd bmat(p, p);
    Eigen::VectorXd yb(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      bmat.row(j) = xs.row(basis[static_cast<std::size_t>(j)]);
      yb(j) = ys(basis[static_cast<std::size_t>(j)]);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(bmat);
    const Eigen::VectorXd beta = lu.solve(yb);
    // Columns d_j = B^{-1} e_j; directions (x_i' d_j) for all rows at once.
    const Eigen::MatrixXd binv = lu.inverse();
    const Eigen::MatrixXd dir = xs * binv;  // n x p
    Eigen::VectorXd resid = ys - xs * beta;
    std::fill(in_basis.begin(), in_basis.end(), 0);
    for (Eigen::Index idx : basis) {
      in_basis[static_cast<std::size_t>(idx)] = 1;
      resid(idx) = 0.0;
    }
    out = beta;

    // Directional derivatives along +d_j (sign +1) and -d_j (sign -1).
    double best = 0.0;
    Eigen::Index best_j = -1;
    double best_sign = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double tj = tau(basis[static_cast<std::size_t>(j)]);
      for (const double sign : {1.0, -1.0}) {
        double deriv = sign > 0 ? (1.0 - tj) : tj;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (in_basis[static_cast<std::size_t>(i)]) continue;
          const double a = sign * dir(i, j);  // residual moves by -t a
          const double ri = resid(i);
          if (ri > zero_tol) {
            deriv -= tau(i) * a;
          } else if (ri < -zero_tol) {
            deriv += (1.0 - tau(i)) * a;
          } else {
            deriv += check_loss(-a, tau(i));
          }
        }
        if (deriv < best) {
          best = deriv;
          best_j = j;
          best_sign = sign;
        }
      }
    }
    const double deriv_tol = 1e-12 * (1.0 + xs.cwiseAbs().sum() / static_cast<double>(p));
    if (best_j < 0 || best > -deriv_tol) return true;

    // Exact line search: the objective along the edge is convex piecewise
    // linear; its slope rises by |a_i| at each residual sign change.
    breaks.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const double a = best_sign * dir(i, best_j);
      if (a == 0.0) continue;
      const double t = resid(i) / a;
      if (t > 0.0 && std::abs(resid(i)) > zero_tol) breaks.emplace_back(t, i);
    }
    std::sort(breaks.begin(), breaks.end());
    double slope = best;
    Eigen::Index entering = -1;
    for (const auto& [t, i] : breaks) {
      slope += std::abs(dir(i, best_j));
      if (slope >= 0.0) {
        entering = i;
        break;
      }
    }
    if (entering < 0) return true;  // numerically flat; keep the current vertex
    basis[static_cast<std::size_t>(best_j)] = entering;
  }
  return true;
}

Eigen::VectorXd solve_scaled(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys, const Eigen::VectorXd& tau,
                             SolverStats& stats) {
  const Eigen::VectorXd ip = interior_point(xs, ys, tau, stats);
  Eigen::VectorXd vertex;
  int iters = 0;
  if (basic_descent(xs, ys, tau, ip, vertex, iters)) {
    stats.descent_iterations = iters;
    if (scaled_objective(xs, ys, tau, vertex) <= scaled_objective(xs, ys, tau, ip)) {
      stats.polished = true;
      return vertex;
    }
  }
  return ip;
}

}  // namespace

namespace detail {

Eigen::VectorXd polish_basic_solution(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys,
                                      const Eigen::VectorXd& tau, const Eigen::VectorXd& start, int* iterations) {
  Eigen::VectorXd vertex;
  int iters = 0;
  const bool ok = basic_descent(xs, ys, tau, start, vertex, iters);
  if (iterations) *iterations = iters;
  if (ok && scaled_objective(xs, ys, tau, vertex) <= scaled_objective(xs, ys, tau, start)) return vertex;
  return start;
}

}  // namespace detail

Eigen::VectorXd solve_check_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& tau, const Eigen::VectorXd& weight,
                                       SolverStats* stats) {
  if (x.rows() != y.size() || tau.size() != y.size() || weight.size() != y.size()) {
    throw InvalidArgument("check regression: inconsistent row counts");
  }
  if (x.rows() < x.cols()) throw InvalidArgument("check regression: fewer observations than coefficients");
  const Eigen::MatrixXd xs = x.array().colwise() * weight.array();
  const Eigen::VectorXd ys = y.cwiseProduct(weight);
  SolverStats local;
  Eigen::VectorXd b = solve_scaled(xs, ys, tau, local);
  if (stats) *stats = local;
  return b;
}

double check_regression_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& tau, const Eigen::VectorXd& weight,
                                  const Eigen::VectorXd& b) {
  const Eigen::VectorXd r = y - x * b;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += weight(i) * check_loss(r(i), tau(i));
  return total;
}

Eigen::VectorXd quantile_regress(const Eigen::VectorXd& y, const Eigen::MatrixXd& z, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("quantile level must lie in (0, 1)");
  if (z.rows() != y.size()) throw InvalidArgument("quantile_regress: y and Z differ in length");
  if (z.rows() < z.cols()) throw InvalidArgument("quantile_regress: T < r");
  if (linalg::numerical_rank(z) < z.cols()) throw NumericalError("quantile_regress: rank-deficient design");
  const Eigen::Index n = y.size();
  return solve_check_regression(z, y, Eigen::VectorXd::Constant(n, tau), Eigen::VectorXd::Ones(n));
}

double quantile_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& z, double tau,
                          const Eigen::VectorXd& coef) {
  const Eigen::VectorXd r = y - z * coef;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += check_loss(r(i), tau);
  return total;
}

StackedDesign stack_loadings(const std::vector<Eigen::MatrixXd>& loadings, const QuantileGrid& grid) {
  if (loadings.size() != grid.size()) throw InvalidArgument("one loading matrix per quantile level is required");
  const Eigen::Index n = loadings.front().rows();
  const Eigen::Index r = loadings.front().cols();
  const Eigen::Index kk = static_cast<Eigen::Index>(loadings.size());
  StackedDesign out;
  out.design.resize(n * kk, r);
  out.tau.resize(n * kk);
  out.weight.resize(n * kk);
  for (Eigen::Index k = 0; k < kk; ++k) {
    const auto& lk = loadings[static_cast<std::size_t>(k)];
    if (lk.rows() != n || lk.cols() != r) throw InvalidArgument("loading matrices differ in shape");
    out.design.middleRows(k * n, n) = lk;
    out.tau.segment(k * n, n).setConstant(grid.level(static_cast<std::size_t>(k)));
    out.weight.segment(k * n, n).setConstant(grid.weight(static_cast<std::size_t>(k)));
  }
  return out;
}

namespace {

Eigen::VectorXd solve_with_method(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& tau,
                                  const Eigen::VectorXd& weight, const FactorStepOptions& options) {
  if (options.method == FactorStepMethod::admm) {
    AdmmResult res = admm_check_regression(x, y, tau, weight, options.admm);
    if (!res.converged && !options.admm.polish) {
      throw NumericalError("ADMM did not converge within " + std::to_string(res.iterations) +
                           " iterations (primal residual " + std::to_string(res.primal_residual) +
                           ", dual residual " + std::to_string(res.dual_residual) + ")");
    }
    return res.coef;
  }
  return solve_check_regression(x, y, tau, weight);
}

}  // namespace

Eigen::VectorXd composite_factor_step(const Eigen::VectorXd& x_t, const StackedDesign& stacked,
                                      const FactorStepOptions& options, const Eigen::VectorXd* fallback) {
  const Eigen::Index nk = stacked.design.rows();
  const Eigen::Index r = stacked.design.cols();
  if (x_t.size() == 0 || nk % x_t.size() != 0) throw InvalidArgument("factor step: x_t does not match loadings");
  const Eigen::Index kk = nk / x_t.size();
  Eigen::VectorXd response(nk);
  for (Eigen::Index k = 0; k < kk; ++k) response.segment(k * x_t.size(), x_t.size()) = x_t;

  const Eigen::MatrixXd scaled = stacked.design.array().colwise() * stacked.weight.array();
  const Eigen::Index rank = linalg::numerical_rank(scaled);
  if (rank == r) return solve_with_method(stacked.design, response, stacked.tau, stacked.weight, options);
  if (fallback == nullptr) throw NumericalError("factor step: stacked loading matrix is rank deficient");
  if (fallback->size() != r) throw InvalidArgument("factor step: fallback has wrong length");

  const auto eig = linalg::sorted_symmetric_eigen(scaled.transpose() * scaled);
  const Eigen::MatrixXd range = eig.vectors.leftCols(rank);
  const Eigen::MatrixXd null = eig.vectors.rightCols(r - rank);
  Eigen::VectorXd f = null * (null.transpose() * *fallback);
  if (rank > 0) {
    const Eigen::VectorXd a =
        solve_with_method(stacked.design * range, response, stacked.tau, stacked.weight, options);
    f += range * a;
  }
  return f;
}

Eigen::VectorXd composite_factor_step(const Eigen::VectorXd& x_t, const std::vector<Eigen::MatrixXd>& loadings,
                                      const QuantileGrid& grid, const FactorStepOptions& options,
                                      const Eigen::VectorXd* fallback) {
  if (loadings.empty() || loadings.front().rows() != x_t.size()) {
    throw InvalidArgument("factor step: x_t length must equal N");
  }
  return composite_factor_step(x_t, stack_loadings(loadings, grid), options, fallback);
}

double composite_factor_objective(const Eigen::VectorXd& x_t, const std::vector<Eigen::MatrixXd>& loadings,
                                  const QuantileGrid& grid, const Eigen::VectorXd& f) {
  double total = 0.0;
  for (std::size_t k = 0; k < loadings.size(); ++k) {
    const Eigen::VectorXd r = x_t - loadings[k] * f;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) sum += check_loss(r(i), grid.level(k));
    total += grid.weight(k) * sum;
  }
  return total;
}

double composite_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& factors,
                           const std::vector<Eigen::MatrixXd>& loadings, const QuantileGrid& grid) {
  if (loadings.size() != grid.size()) throw InvalidArgument("one loading matrix per quantile level is required");
  if (factors.rows() != x.rows()) throw InvalidArgument("factor matrix must have T rows");
  for (const auto& l : loadings) {
    if (l.rows() != x.cols() || l.cols() != factors.cols()) {
      throw InvalidArgument("loading matrix must be N x r");
    }
  }
  double total = 0.0;
  for (std::size_t k = 0; k < loadings.size(); ++k) {
    const Eigen::MatrixXd resid = x - factors * loadings[k].transpose();
    const double tau = grid.level(k);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < resid.size(); ++j) sum += check_loss(resid.data()[j], tau);
    total += grid.weight(k) * sum;
  }
  return total / static_cast<double>(x.rows() * x.cols());
}

double composite_objective(const Panel& panel, const Eigen::MatrixXd& factors,
                           const std::vector<Eigen::MatrixXd>& loadings, const QuantileGrid& grid) {
  return composite_objective(panel.values(), factors, loadings, grid);
}

}  // namespace dafm
