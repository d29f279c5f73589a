#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dictlab/errors.hpp"

namespace dictlab {

/// Solution of min_alpha 1/2 ||x - D alpha||^2 + lambda ||alpha||_1.
struct LassoSolution {
  Eigen::VectorXd alpha;
  std::vector<int> support;  ///< indices with |alpha_j| > zero_tol, sorted
  Eigen::VectorXd sign;      ///< in {-1, 0, 1}, zero-clipped like `support`
  double objective = 0.0;
  double kkt_residual = 0.0;
  int sweeps = 0;
};

inline double lasso_objective(const Eigen::MatrixXd& D, const Eigen::VectorXd& x,
                              double lambda, const Eigen::VectorXd& alpha) {
  return 0.5 * (x - D * alpha).squaredNorm() + lambda * alpha.lpNorm<1>();
}

namespace detail {

inline double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

// Max violation of the stationarity conditions at alpha, given g = D^T r.
inline double kkt_violation(const Eigen::VectorXd& g, const Eigen::VectorXd& alpha,
                            double lambda, double zero_tol) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    const double violation = (std::abs(alpha(j)) > zero_tol)
                                 ? std::abs(g(j) - lambda * (alpha(j) > 0.0 ? 1.0 : -1.0))
                                 : std::max(std::abs(g(j)) - lambda, 0.0);
    worst = std::max(worst, violation);
  }
  return worst;
}

}  // namespace detail

/// Cyclic coordinate descent with exact soft-threshold steps, stopped on the
/// KKT residual.  Columns of D are assumed unit-norm (general norms are
/// handled, zero columns are skipped).
inline LassoSolution lasso_solve(const Eigen::MatrixXd& D, const Eigen::VectorXd& x,
                                 double lambda, double tol = 1e-10, int max_iter = 100000) {
  if (!(lambda > 0.0)) throw invalid_argument("lasso_solve: lambda must be positive");
  if (x.size() != D.rows()) throw invalid_argument("lasso_solve: dimension mismatch");
  if (!(tol > 0.0) || max_iter < 1)
    throw invalid_argument("lasso_solve: bad tol or max_iter");

  const Eigen::Index p = D.cols();
  const Eigen::VectorXd col_sq = D.colwise().squaredNorm();
  LassoSolution out;
  out.alpha = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd residual = x;

  // Active-set polish, tried once the descent slows: starting from the
  // current sign pattern, alternately solve the restricted stationarity
  // system exactly (with one refinement step), drop coordinates whose sign
  // disagrees, and admit the worst dual violator.  A candidate is accepted
  // only if the full KKT conditions verify at `tol`.  This finishes instances
  // where cyclic descent crawls (ill-conditioned or degenerate patterns).
  const auto try_pattern_solve = [&](std::vector<int> J, std::vector<double> s) -> bool {
    const auto solve_restricted = [&](const std::vector<int>& support,
                                      const std::vector<double>& signs,
                                      Eigen::VectorXd& alpha_out) -> bool {
      const auto k = static_cast<Eigen::Index>(support.size());
      Eigen::MatrixXd D_J(D.rows(), k);
      Eigen::VectorXd s_J(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        D_J.col(a) = D.col(support[static_cast<std::size_t>(a)]);
        s_J(a) = signs[static_cast<std::size_t>(a)];
      }
      const Eigen::MatrixXd gram = D_J.transpose() * D_J;
      const Eigen::VectorXd rhs = D_J.transpose() * x - lambda * s_J;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
      if (ldlt.info() != Eigen::Success) return false;
      alpha_out = ldlt.solve(rhs);
      alpha_out += ldlt.solve(rhs - gram * alpha_out);
      return alpha_out.allFinite();
    };

    const int max_polish = 4 * static_cast<int>(p) + 8;
    for (int round = 0; round < max_polish; ++round) {
      Eigen::VectorXd alpha_J;
      if (!J.empty() && !solve_restricted(J, s, alpha_J)) return false;
      // drop the worst sign violator, if any
      int worst_drop = -1;
      double worst_value = 0.0;
      for (std::size_t a = 0; a < J.size(); ++a) {
        const double signed_value = alpha_J(static_cast<Eigen::Index>(a)) * s[a];
        if (signed_value <= 0.0 && signed_value <= worst_value) {
          worst_value = signed_value;
          worst_drop = static_cast<int>(a);
        }
      }
      if (worst_drop >= 0) {
        J.erase(J.begin() + worst_drop);
        s.erase(s.begin() + worst_drop);
        continue;
      }
      Eigen::VectorXd candidate = Eigen::VectorXd::Zero(p);
      for (std::size_t a = 0; a < J.size(); ++a)
        candidate(J[a]) = alpha_J(static_cast<Eigen::Index>(a));
      const Eigen::VectorXd r = x - D * candidate;
      const Eigen::VectorXd g = D.transpose() * r;
      if (detail::kkt_violation(g, candidate, lambda, tol) <= tol) {
        out.alpha = candidate;
        residual = r;
        return true;
      }
      // admit the worst off-pattern dual violator
      int enter = -1;
      double worst_dual = lambda;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (std::find(J.begin(), J.end(), static_cast<int>(j)) != J.end()) continue;
        if (std::abs(g(j)) > worst_dual) {
          worst_dual = std::abs(g(j));
          enter = static_cast<int>(j);
        }
      }
      if (enter < 0) return false;  // stationarity imprecision, not a missing atom
      J.push_back(enter);
      s.push_back(g(enter) > 0.0 ? 1.0 : -1.0);
    }
    return false;
  };

  double kkt = detail::kkt_violation(D.transpose() * residual, out.alpha, lambda, tol);
  int sweep = 0;
  Eigen::VectorXd previous_sign = Eigen::VectorXd::Zero(p);
  while (kkt > tol) {
    if (sweep >= max_iter)
      throw convergence_error("lasso_solve: KKT residual " + std::to_string(kkt) +
                                  " after max_iter sweeps",
                              kkt);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_sq(j) <= 0.0) continue;
      const double old = out.alpha(j);
      const double rho = D.col(j).dot(residual) + col_sq(j) * old;
      const double updated = detail::soft_threshold(rho, lambda) / col_sq(j);
      if (updated != old) {
        residual += D.col(j) * (old - updated);
        out.alpha(j) = updated;
      }
    }
    ++sweep;
    kkt = detail::kkt_violation(D.transpose() * residual, out.alpha, lambda, tol);
    if (kkt > tol) {
      std::vector<int> J;
      Eigen::VectorXd sign_now = Eigen::VectorXd::Zero(p);
      for (Eigen::Index j = 0; j < p; ++j) {
        if (std::abs(out.alpha(j)) > tol) {
          sign_now(j) = out.alpha(j) > 0.0 ? 1.0 : -1.0;
          J.push_back(static_cast<int>(j));
        }
      }
      if (sign_now == previous_sign || sweep % 8 == 0) {
        std::vector<double> s(J.size());
        for (std::size_t a = 0; a < J.size(); ++a) s[a] = sign_now(J[a]);
        if (try_pattern_solve(J, s)) {
          kkt = detail::kkt_violation(D.transpose() * residual, out.alpha, lambda, tol);
          break;
        }
      }
      previous_sign = std::move(sign_now);
    }
  }

  out.kkt_residual = kkt;
  out.sweeps = sweep;
  out.sign = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::abs(out.alpha(j)) <= tol) {
      out.alpha(j) = 0.0;
    } else {
      out.sign(j) = out.alpha(j) > 0.0 ? 1.0 : -1.0;
      out.support.push_back(static_cast<int>(j));
    }
  }
  out.objective = lasso_objective(D, x, lambda, out.alpha);
  return out;
}

}  // namespace dictlab
