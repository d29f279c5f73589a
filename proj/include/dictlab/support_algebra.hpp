#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dictlab/dictionary.hpp"
#include "dictlab/errors.hpp"
#include "dictlab/lasso.hpp"
#include "dictlab/model.hpp"
#include "dictlab/parallel.hpp"

namespace dictlab {

constexpr double kGramConditionLimit = 1e12;

/// Factored linear algebra of a restricted dictionary D_J: the inverse Gram
/// Theta_J = (D_J^T D_J)^{-1} and the projector P_J onto span(D_J).
struct SupportAlgebra {
  Eigen::MatrixXd atoms;      ///< m x k, the selected columns
  Eigen::MatrixXd theta;      ///< k x k inverse Gram
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool gram_condition_ok = false;

  Eigen::MatrixXd projector() const { return atoms * theta * atoms.transpose(); }

  /// Applies P_J without forming the m x m matrix.
  Eigen::VectorXd project(const Eigen::VectorXd& u) const {
    return atoms * llt.solve(atoms.transpose() * u);
  }
};

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& D, std::span<const int> J) {
  Eigen::MatrixXd out(D.rows(), static_cast<Eigen::Index>(J.size()));
  for (std::size_t a = 0; a < J.size(); ++a) {
    if (J[a] < 0 || J[a] >= D.cols())
      throw invalid_argument("select_columns: index out of range");
    out.col(static_cast<Eigen::Index>(a)) = D.col(J[a]);
  }
  return out;
}

/// Builds the restricted algebra; throws singular_support_error when the Gram
/// condition number (eigenvalue ratio) exceeds 1e12.
inline SupportAlgebra support_algebra(const Eigen::MatrixXd& D, std::span<const int> J,
                                      long signal_index = -1) {
  SupportAlgebra out;
  out.atoms = select_columns(D, J);
  const auto k = static_cast<Eigen::Index>(J.size());
  const Eigen::MatrixXd gram = out.atoms.transpose() * out.atoms;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = k > 0 ? eig.eigenvalues().minCoeff() : 1.0;
  const double hi = k > 0 ? eig.eigenvalues().maxCoeff() : 1.0;
  out.gram_condition_ok = lo > 0.0 && hi <= lo * kGramConditionLimit;
  if (!out.gram_condition_ok)
    throw singular_support_error(
        "support_algebra: Gram matrix is singular or ill-conditioned (cond > 1e12)" +
            (signal_index >= 0 ? " for signal " + std::to_string(signal_index) : ""),
        signal_index);
  out.llt.compute(gram);
  if (out.llt.info() != Eigen::Success)
    throw singular_support_error("support_algebra: Cholesky factorization failed",
                                 signal_index);
  out.theta = out.llt.solve(Eigen::MatrixXd::Identity(k, k));
  return out;
}

/// Sign-restricted minimizer: alpha_J = Theta_J (D_J^T x - lambda s_J), zero
/// off J.  lambda = 0 is allowed here (plain restricted least squares).
inline Eigen::VectorXd restricted_solution(const Eigen::MatrixXd& D, const Eigen::VectorXd& x,
                                           std::span<const int> J, const Eigen::VectorXd& s,
                                           double lambda) {
  const SupportAlgebra algebra = support_algebra(D, J);
  Eigen::VectorXd s_J(static_cast<Eigen::Index>(J.size()));
  for (std::size_t a = 0; a < J.size(); ++a) s_J(static_cast<Eigen::Index>(a)) = s(J[a]);
  const Eigen::VectorXd rhs = algebra.atoms.transpose() * x - lambda * s_J;
  const Eigen::VectorXd alpha_J = algebra.llt.solve(rhs);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(D.cols());
  for (std::size_t a = 0; a < J.size(); ++a) alpha(J[a]) = alpha_J(static_cast<Eigen::Index>(a));
  return alpha;
}

/// Closed-form surrogate phi_x(D | s) for a sign pattern s supported on J:
///   1/2 [ ||x||^2 - (D_J^T x - lambda s_J)^T Theta_J (D_J^T x - lambda s_J) ].
inline double phi(const Eigen::MatrixXd& D, const Eigen::VectorXd& x, std::span<const int> J,
                  const Eigen::VectorXd& s, double lambda, long signal_index = -1) {
  if (J.empty()) return 0.5 * x.squaredNorm();
  const SupportAlgebra algebra = support_algebra(D, J, signal_index);
  Eigen::VectorXd s_J(static_cast<Eigen::Index>(J.size()));
  for (std::size_t a = 0; a < J.size(); ++a) s_J(static_cast<Eigen::Index>(a)) = s(J[a]);
  const Eigen::VectorXd b = algebra.atoms.transpose() * x - lambda * s_J;
  return 0.5 * (x.squaredNorm() - b.dot(algebra.llt.solve(b)));
}

inline double phi(const Eigen::MatrixXd& D, const GeneratedSignal& s, double lambda,
                  long signal_index = -1) {
  return phi(D, s.x, s.support, s.sign, lambda, signal_index);
}

/// Lasso value f_x(D) (objective at the minimizer).
inline double f_value(const Eigen::MatrixXd& D, const Eigen::VectorXd& x, double lambda,
                      double tol = 1e-10, int max_iter = 100000) {
  return lasso_solve(D, x, lambda, tol, max_iter).objective;
}

/// Empirical sparse-coding objective F_n = (1/n) sum_i f_{x^i}(D).
inline double F_n(const Eigen::MatrixXd& D, const SignalBatch& batch, double lambda,
                  double tol = 1e-10, int max_iter = 100000) {
  if (batch.size() == 0) throw invalid_argument("F_n: batch is empty");
  std::vector<double> values(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    values[i] = f_value(D, batch[i].x, lambda, tol, max_iter);
  });
  return compensated_sum(values) / static_cast<double>(batch.size());
}

/// Surrogate aggregate Phi_n(D | sign(A0)) using each signal's own ground
/// truth sign pattern.  Singular supports are reported with their index.
inline double Phi_n(const Eigen::MatrixXd& D, const SignalBatch& batch, double lambda) {
  if (batch.size() == 0) throw invalid_argument("Phi_n: batch is empty");
  std::vector<double> values(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    values[i] = phi(D, batch[i], lambda, static_cast<long>(i));
  });
  return compensated_sum(values) / static_cast<double>(batch.size());
}

/// Outcome of the exact sign recovery test at a fixed dictionary.
struct RecoveryCertificate {
  bool recovered = false;
  double sign_margin = 0.0;  ///< min_j s_j * alpha_j over the support
  double dual_margin = 0.0;  ///< lambda - (off-support dual norm)
};

/// Sufficient certificate that the Lasso at (D, x, lambda) admits the unique
/// solution supported on J = supp(alpha0) with sign(alpha) = sign(alpha0):
///  (a) sign(Theta_J (D_J^T x - lambda s_J)) = s_J, and
///  (b) ||D_{J^c}^T (I - P_J) x||_inf + lambda |||D_{J^c}^T D_J Theta_J|||_inf < lambda.
inline RecoveryCertificate certify_exact_recovery(const Eigen::MatrixXd& D,
                                                  const Eigen::VectorXd& x,
                                                  const Eigen::VectorXd& alpha0, double lambda,
                                                  long signal_index = -1) {
  if (!(lambda > 0.0))
    throw invalid_argument("certify_exact_recovery: lambda must be positive");
  std::vector<int> J;
  for (Eigen::Index j = 0; j < alpha0.size(); ++j)
    if (alpha0(j) != 0.0) J.push_back(static_cast<int>(j));

  RecoveryCertificate cert;
  if (J.empty()) {
    const double dual = (D.transpose() * x).lpNorm<Eigen::Infinity>();
    cert.sign_margin = 0.0;
    cert.dual_margin = lambda - dual;
    cert.recovered = dual < lambda;
    return cert;
  }

  const SupportAlgebra algebra = support_algebra(D, J, signal_index);
  const auto k = static_cast<Eigen::Index>(J.size());
  Eigen::VectorXd s_J(k);
  for (Eigen::Index a = 0; a < k; ++a) s_J(a) = alpha0(J[static_cast<std::size_t>(a)]) > 0.0 ? 1.0 : -1.0;
  const Eigen::VectorXd alpha_J =
      algebra.llt.solve(Eigen::VectorXd(algebra.atoms.transpose() * x - lambda * s_J));
  cert.sign_margin = (s_J.array() * alpha_J.array()).minCoeff();

  // Off-support dual feasibility.
  std::vector<int> Jc;
  Jc.reserve(static_cast<std::size_t>(D.cols() - k));
  {
    std::size_t cursor = 0;
    for (int j = 0; j < static_cast<int>(D.cols()); ++j) {
      if (cursor < J.size() && J[cursor] == j) {
        ++cursor;
      } else {
        Jc.push_back(j);
      }
    }
  }
  double dual = 0.0;
  if (!Jc.empty()) {
    const Eigen::MatrixXd atoms_c = select_columns(D, Jc);
    const Eigen::VectorXd residual = x - algebra.project(x);
    const double correlation = (atoms_c.transpose() * residual).lpNorm<Eigen::Infinity>();
    const Eigen::MatrixXd irrep = atoms_c.transpose() * algebra.atoms * algebra.theta;
    const double irrep_norm = irrep.cwiseAbs().rowwise().sum().maxCoeff();
    dual = correlation + lambda * irrep_norm;
  }
  cert.dual_margin = lambda - dual;
  cert.recovered = cert.sign_margin > 0.0 && cert.dual_margin > 0.0;
  return cert;
}

inline RecoveryCertificate certify_exact_recovery(const Eigen::MatrixXd& D,
                                                  const GeneratedSignal& s, double lambda,
                                                  long signal_index = -1) {
  return certify_exact_recovery(D, s.x, s.alpha0, lambda, signal_index);
}

/// Almost-sure recovery window for noiseless, bounded coefficients:
///   sqrt(k) alpha_hi t / (2 - Q_t^2) < lambda <= (4/9) alpha_lo,
/// where Q_t^2 = 1 / (1 - k mu_t).  Requires k mu_t < 1/2.
inline bool noiseless_recovery_condition(int k, double mu_t, double t, double alpha_hi,
                                         double alpha_lo, double lambda) {
  if (k < 1 || t < 0.0 || !(alpha_lo > 0.0) || alpha_hi < alpha_lo || !(lambda > 0.0))
    throw invalid_argument("noiseless_recovery_condition: bad arguments");
  const double k_mu = static_cast<double>(k) * mu_t;
  if (!(k_mu < 0.5))
    throw condition_violated_error(
        "noiseless_recovery_condition: k*mu(t) >= 1/2 (Q_t^2 >= 2 empties the window)");
  const double q_sq = 1.0 / (1.0 - k_mu);
  const double lower = std::sqrt(static_cast<double>(k)) * alpha_hi * t / (2.0 - q_sq);
  const double upper = (4.0 / 9.0) * alpha_lo;
  return lower < lambda && lambda <= upper;
}

}  // namespace dictlab
