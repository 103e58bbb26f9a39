#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "iisu/types.hpp"

namespace iisu {

/// Half squared residual 0.5 * ||T x - l||^2, the objective every
/// nonnegative solver in this file minimizes.
inline double half_squared_residual(const Eigen::MatrixXd& t, const Eigen::VectorXd& l,
                                    const Eigen::VectorXd& x) {
  return 0.5 * (t * x - l).squaredNorm();
}

/// Largest violation of the nonnegative least squares optimality conditions
/// at x. For the gradient g = T^T (T x - l) a minimizer has g >= 0 where
/// x = 0 and g = 0 where x > 0; the return value is how far x is from that.
inline double nnls_kkt_violation(const Eigen::MatrixXd& t, const Eigen::VectorXd& l,
                                 const Eigen::VectorXd& x) {
  const Eigen::VectorXd g = t.transpose() * (t * x - l);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0)
      worst = std::max(worst, std::abs(g[i]));
    else
      worst = std::max(worst, std::max(0.0, -g[i]));
  }
  return worst;
}

/// Nonnegative least squares by the Lawson-Hanson active set method.
///
/// Starts from x = 0, repeatedly moves the zero-set coordinate with the most
/// negative gradient into the passive set, and re-solves the unconstrained
/// problem on the passive set, stepping back to the feasible boundary when a
/// passive coefficient would cross zero. Ties in the entering-variable pick
/// go to the lowest index so runs are reproducible.
///
/// `max_iter = 0` selects a cap proportional to the column count. Hitting
/// the cap throws SolverError; for well-posed inputs the method terminates
/// long before.
inline Eigen::VectorXd nnls_active_set(const Eigen::MatrixXd& t, const Eigen::VectorXd& l,
                                       int max_iter = 0) {
  const Eigen::Index m = t.rows();
  const Eigen::Index n = t.cols();
  if (l.size() != m) throw ValidationError("nnls: matrix and rhs row counts differ");
  if (n == 0) return Eigen::VectorXd();
  if (max_iter <= 0) max_iter = static_cast<int>(30 + 10 * n);

  const Eigen::VectorXd atb = t.transpose() * l;
  const double tol = 10.0 * static_cast<double>(std::max(m, n)) *
                     std::numeric_limits<double>::epsilon() *
                     std::max(atb.cwiseAbs().maxCoeff(), 1.0);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<size_t>(n), false);
  std::vector<Eigen::Index> passive_list;

  const auto solve_passive = [&]() -> Eigen::VectorXd {
    Eigen::MatrixXd tp(m, static_cast<Eigen::Index>(passive_list.size()));
    for (size_t j = 0; j < passive_list.size(); ++j) tp.col(j) = t.col(passive_list[j]);
    return tp.colPivHouseholderQr().solve(l);
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    // Entering variable: steepest descent direction among the zero set.
    const Eigen::VectorXd w = atb - t.transpose() * (t * x);
    Eigen::Index enter = -1;
    double best = tol;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!passive[static_cast<size_t>(i)] && w[i] > best) {
        best = w[i];
        enter = i;
      }
    if (enter < 0) return x;  // KKT conditions hold

    passive[static_cast<size_t>(enter)] = true;
    passive_list.push_back(enter);

    // Inner loop: retreat to the boundary until the passive solve is
    // feasible. Each pass removes at least one variable, so it ends.
    while (true) {
      if (++iter > max_iter) break;
      const Eigen::VectorXd s = solve_passive();
      double alpha = 1.0;
      for (size_t j = 0; j < passive_list.size(); ++j)
        if (s[static_cast<Eigen::Index>(j)] <= 0.0) {
          const double xj = x[passive_list[j]];
          alpha = std::min(alpha, xj / (xj - s[static_cast<Eigen::Index>(j)]));
        }
      if (alpha >= 1.0) {
        x.setZero();
        for (size_t j = 0; j < passive_list.size(); ++j)
          x[passive_list[j]] = s[static_cast<Eigen::Index>(j)];
        break;
      }
      for (size_t j = 0; j < passive_list.size(); ++j) {
        const Eigen::Index i = passive_list[j];
        x[i] += alpha * (s[static_cast<Eigen::Index>(j)] - x[i]);
      }
      // Drop everything pinned at (or numerically through) zero.
      std::vector<Eigen::Index> kept;
      for (const Eigen::Index i : passive_list) {
        if (x[i] <= tol * 1e-2 || !(x[i] > 0.0)) {
          x[i] = 0.0;
          passive[static_cast<size_t>(i)] = false;
        } else {
          kept.push_back(i);
        }
      }
      passive_list = std::move(kept);
      if (passive_list.empty()) break;
    }
  }

  std::ostringstream msg;
  msg << "nnls did not converge within " << max_iter
      << " iterations (residual " << std::sqrt(2.0 * half_squared_residual(t, l, x)) << ")";
  throw SolverError(msg.str());
}

struct AdmmSettings {
  double rho = 1.0;
  double abs_tol = 1e-8;
  double rel_tol = 1e-6;
  int max_iter = 5000;
};

struct AdmmResult {
  Eigen::VectorXd x;  // the projected iterate, exactly nonnegative
  int iterations = 0;
  bool converged = false;
};

/// Nonnegative least squares by ADMM splitting min 0.5||Tx - l||^2 over
/// x = z, z >= 0. Columns are equilibrated to unit norm and the penalty is
/// settings.rho times the geometric mean of the extreme Gram eigenvalues,
/// so the iteration behaves the same across problem scalings. The loop uses
/// over-relaxation and residual balancing (the penalty adapts when primal
/// and dual residuals drift apart), and starts from the projected ridge
/// solution or zero, whichever fits better. On exit the support of the
/// iterate is polished by a restricted least-squares solve, accepted only
/// when feasible and no worse; `converged` reports whether the returned
/// point was certified optimal (residual criteria or a clean KKT check).
/// The result is nonnegative exactly even at the iteration cap. Callers
/// decide whether an unconverged pixel is an error.
inline AdmmResult nnls_admm(const Eigen::MatrixXd& t, const Eigen::VectorXd& l,
                            const AdmmSettings& settings = {}) {
  const Eigen::Index n = t.cols();
  if (l.size() != t.rows()) throw ValidationError("nnls: matrix and rhs row counts differ");
  if (!(settings.rho > 0.0)) throw ValidationError("admm rho must be positive");
  if (n == 0) return {Eigen::VectorXd(), 0, true};

  Eigen::VectorXd col_scale(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double nrm = t.col(j).norm();
    col_scale[j] = nrm > 1e-300 ? nrm : 1.0;
  }
  const Eigen::MatrixXd ts = t.array().rowwise() / col_scale.transpose().array();
  const Eigen::MatrixXd gram = ts.transpose() * ts;
  const Eigen::VectorXd atb = ts.transpose() * l;

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double lam_max = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
  const double lam_min = std::max(eig.eigenvalues().minCoeff(), 1e-8 * lam_max);
  double rho = settings.rho * std::sqrt(lam_min * lam_max);

  const auto factor = [&gram](double r) {
    Eigen::MatrixXd normal = gram;
    normal.diagonal().array() += r;
    return Eigen::LDLT<Eigen::MatrixXd>(normal);
  };
  Eigen::LDLT<Eigen::MatrixXd> ldlt = factor(rho);

  const auto objective = [&](const Eigen::VectorXd& w) {
    return 0.5 * (ts * w - l).squaredNorm();
  };
  const double obj_zero = 0.5 * l.squaredNorm();
  Eigen::VectorXd z = ldlt.solve(atb).cwiseMax(0.0);
  if (objective(z) > obj_zero) z.setZero();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  constexpr double kRelax = 1.6;

  AdmmResult result;
  for (int k = 1; k <= settings.max_iter; ++k) {
    const Eigen::VectorXd x = ldlt.solve(atb + rho * (z - u));
    const Eigen::VectorXd z_prev = z;
    const Eigen::VectorXd x_relaxed = kRelax * x + (1.0 - kRelax) * z;
    z = (x_relaxed + u).cwiseMax(0.0);
    u += x_relaxed - z;

    const double primal = (x - z).norm();
    const double dual = rho * (z - z_prev).norm();
    const double eps_pri =
        sqrt_n * settings.abs_tol + settings.rel_tol * std::max(x.norm(), z.norm());
    const double eps_dual =
        sqrt_n * settings.abs_tol + settings.rel_tol * (rho * u).norm();
    result.iterations = k;
    if (primal <= eps_pri && dual <= eps_dual) {
      result.converged = true;
      break;
    }
    if (primal > 10.0 * dual && dual > 0.0) {
      rho *= 2.0;
      u /= 2.0;
      ldlt = factor(rho);
    } else if (dual > 10.0 * primal && primal > 0.0) {
      rho /= 2.0;
      u *= 2.0;
      ldlt = factor(rho);
    }
  }

  // Refinement: active-set descent warm started on the support the
  // splitting identified. Each pass solves the least squares restricted to
  // the support; an infeasible step retreats along the segment to the
  // boundary and releases the columns that hit zero, a feasible step either
  // certifies optimality (no inactive column offers descent) or admits the
  // most promising inactive column. The pass budget honors tiny iteration
  // caps. The refined point is kept only when it fits no worse.
  {
    const double z_max = z.maxCoeff();
    std::vector<bool> active(static_cast<std::size_t>(n), false);
    Eigen::VectorXd current = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j)
      if (z[j] > 1e-12 * std::max(z_max, 1.0)) {
        active[static_cast<std::size_t>(j)] = true;
        current[j] = z[j];
      }
    const double admm_obj = objective(z);
    const double kkt_tol = 1e-10 * std::max(1.0, atb.lpNorm<Eigen::Infinity>());
    const int passes = std::min(settings.max_iter, 30 + 10 * static_cast<int>(n));
    bool certified = false;
    for (int pass = 0; pass < passes; ++pass) {
      std::vector<Eigen::Index> support;
      for (Eigen::Index j = 0; j < n; ++j)
        if (active[static_cast<std::size_t>(j)]) support.push_back(j);
      Eigen::VectorXd w(static_cast<Eigen::Index>(support.size()));
      if (!support.empty()) {
        Eigen::MatrixXd t_sub(ts.rows(), static_cast<Eigen::Index>(support.size()));
        for (std::size_t c = 0; c < support.size(); ++c)
          t_sub.col(static_cast<Eigen::Index>(c)) = ts.col(support[c]);
        w = t_sub.completeOrthogonalDecomposition().solve(l);
      }
      if ((w.array() >= 0.0).all()) {
        current.setZero();
        for (std::size_t c = 0; c < support.size(); ++c)
          current[support[c]] = w[static_cast<Eigen::Index>(c)];
        const Eigen::VectorXd grad = gram * current - atb;
        double worst = -kkt_tol;
        Eigen::Index entering = -1;
        for (Eigen::Index j = 0; j < n; ++j)
          if (!active[static_cast<std::size_t>(j)] && grad[j] < worst) {
            worst = grad[j];
            entering = j;
          }
        if (entering < 0) {
          certified = true;
          break;
        }
        active[static_cast<std::size_t>(entering)] = true;
      } else {
        double alpha = 1.0;
        for (std::size_t c = 0; c < support.size(); ++c) {
          const double target = w[static_cast<Eigen::Index>(c)];
          if (target < 0.0) {
            const double here = current[support[c]];
            alpha = std::min(alpha, here / (here - target));
          }
        }
        for (std::size_t c = 0; c < support.size(); ++c) {
          const Eigen::Index j = support[c];
          current[j] += alpha * (w[static_cast<Eigen::Index>(c)] - current[j]);
          if (current[j] <= 1e-14 * std::max(z_max, 1.0)) {
            current[j] = 0.0;
            active[static_cast<std::size_t>(j)] = false;
          }
        }
      }
    }
    if (objective(current) <= admm_obj) {
      z = current;
      if (certified) result.converged = true;
    }
    if (objective(z) > obj_zero) {
      z.setZero();
      result.converged = atb.maxCoeff() <= kkt_tol;
    }
  }

  result.x = (z.array() / col_scale.array()).matrix();
  return result;
}

/// Fully constrained least squares: nonnegative coefficients that sum to
/// one. The sum constraint enters as a heavily weighted extra row and the
/// result is renormalized so the sum holds exactly. A solution collapsing
/// to all zeros is reported as degenerate and replaced by the uniform
/// barycenter.
struct FclsResult {
  Eigen::VectorXd a;
  bool degenerate = false;
};

inline FclsResult fcls_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& y,
                             double delta = 1e3) {
  const Eigen::Index k = m.cols();
  if (k == 0 || m.isZero(0.0))
    throw ValidationError("fcls needs at least one nonzero endmember column");
  Eigen::MatrixXd aug(m.rows() + 1, k);
  aug.topRows(m.rows()) = m;
  aug.row(m.rows()) = Eigen::RowVectorXd::Constant(k, delta);
  Eigen::VectorXd rhs(y.size() + 1);
  rhs.head(y.size()) = y;
  rhs[y.size()] = delta;

  FclsResult result;
  result.a = nnls_active_set(aug, rhs);
  const double sum = result.a.sum();
  if (sum < 1e-12) {
    result.degenerate = true;
    result.a = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  } else {
    result.a /= sum;
  }
  return result;
}

}  // namespace iisu
