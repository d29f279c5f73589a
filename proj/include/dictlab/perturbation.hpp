#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "dictlab/dictionary.hpp"
#include "dictlab/errors.hpp"
#include "dictlab/rng.hpp"

namespace dictlab {

/// Point (W, v, t) of the local parametrization around a reference
/// dictionary: column j moves by angle v_j * t towards the orthogonal
/// direction w^j.
struct Perturbation {
  Eigen::MatrixXd W;  ///< m x p, unit columns, each orthogonal to its atom
  Eigen::VectorXd v;  ///< unit velocity; nonnegative when sampled for probing
  double t = 0.0;     ///< radius
};

namespace detail {

constexpr double kPerturbInvariantTol = 1e-8;

inline void check_perturbation(const Dictionary& D0, const Eigen::MatrixXd& W,
                               const Eigen::VectorXd& v) {
  if (W.rows() != D0.signal_dim() || W.cols() != D0.atom_count())
    throw invalid_argument("perturbation: W shape mismatch");
  if (v.size() != D0.atom_count())
    throw invalid_argument("perturbation: v length mismatch");
  for (Eigen::Index j = 0; j < W.cols(); ++j) {
    if (std::abs(W.col(j).dot(D0.atoms().col(j))) > kPerturbInvariantTol)
      throw invalid_argument("perturbation: column of W not orthogonal to its atom");
    if (std::abs(W.col(j).norm() - 1.0) > kPerturbInvariantTol)
      throw invalid_argument("perturbation: column of W not unit-norm");
  }
  if (std::abs(v.norm() - 1.0) > kPerturbInvariantTol)
    throw invalid_argument("perturbation: v not unit-norm");
}

// Deterministic unit vector orthogonal to d (for the theta_j = 0 column of a
// decomposition, where any such vector is valid).
inline Eigen::VectorXd any_orthogonal_unit(const Eigen::VectorXd& d) {
  const Eigen::Index m = d.size();
  if (m < 2) throw invalid_argument("any_orthogonal_unit: need dimension >= 2");
  Eigen::Index axis = 0;
  d.cwiseAbs().minCoeff(&axis);
  Eigen::VectorXd w = Eigen::VectorXd::Unit(m, axis);
  w -= w.dot(d) * d;
  return w / w.norm();
}

}  // namespace detail

/// Random tangent frame: i.i.d. normal columns projected off the matching
/// atom and renormalized (redrawn on zero projection).
inline Eigen::MatrixXd sample_tangent(Rng& rng, const Dictionary& D0) {
  const Eigen::Index m = D0.signal_dim();
  const Eigen::Index p = D0.atom_count();
  if (m < 2)
    throw invalid_argument("sample_tangent: orthogonal complement is empty for m = 1");
  Eigen::MatrixXd W(m, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd d = D0.atoms().col(j);
    for (;;) {
      Eigen::VectorXd g(m);
      for (Eigen::Index i = 0; i < m; ++i) g(i) = rng.normal();
      g -= g.dot(d) * d;
      const double norm = g.norm();
      if (norm > 1e-12) {
        W.col(j) = g / norm;
        break;
      }
    }
  }
  return W;
}

/// Uniform direction on the unit sphere of R^p; restricted to the closed
/// positive orthant (componentwise |.|) when `positive` is set.
inline Eigen::VectorXd sample_velocity(Rng& rng, Eigen::Index p, bool positive) {
  if (p < 1) throw invalid_argument("sample_velocity: p must be positive");
  Eigen::VectorXd v(p);
  for (;;) {
    for (Eigen::Index i = 0; i < p; ++i) v(i) = rng.normal();
    const double norm = v.norm();
    if (norm > 1e-12) {
      v /= norm;
      break;
    }
  }
  if (positive) v = v.cwiseAbs();
  return v;
}

/// D(W, v, t): column j equals cos(v_j t) d0^j + sin(v_j t) w^j.
inline Dictionary perturb(const Dictionary& D0, const Eigen::MatrixXd& W,
                          const Eigen::VectorXd& v, double t) {
  detail::check_perturbation(D0, W, v);
  Eigen::MatrixXd out(D0.signal_dim(), D0.atom_count());
  for (Eigen::Index j = 0; j < D0.atom_count(); ++j) {
    const double angle = v(j) * t;
    out.col(j) = std::cos(angle) * D0.atoms().col(j) + std::sin(angle) * W.col(j);
  }
  // cos^2 + sin^2 = 1 with orthogonal parts keeps columns unit-norm, and
  // t = 0 reproduces D0 bit for bit.
  return Dictionary(std::move(out));
}

inline Dictionary perturb(const Dictionary& D0, const Perturbation& P) {
  return perturb(D0, P.W, P.v, P.t);
}

/// Inverse of `perturb`: writes D2 as D(D1, W, v, tau) with v in the positive
/// orthant, tau*||v||_inf <= pi and per column ||d2^j - d1^j|| = 2 sin(tau v_j / 2).
/// Columns with theta_j = 0 get an arbitrary valid tangent direction.
inline Perturbation decompose(const Dictionary& D1, const Dictionary& D2) {
  if (D1.signal_dim() != D2.signal_dim() || D1.atom_count() != D2.atom_count())
    throw invalid_argument("decompose: shape mismatch");
  const Eigen::Index m = D1.signal_dim();
  const Eigen::Index p = D1.atom_count();
  Eigen::VectorXd theta(p);
  Eigen::MatrixXd W(m, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd d1 = D1.atoms().col(j);
    const Eigen::VectorXd d2 = D2.atoms().col(j);
    const double c = std::clamp(d1.dot(d2), -1.0, 1.0);
    theta(j) = std::acos(c);
    Eigen::VectorXd z = d2 - c * d1;
    const double norm = z.norm();
    if (norm > 1e-12) {
      W.col(j) = z / norm;  // sin(theta_j) >= 0 convention
    } else {
      W.col(j) = detail::any_orthogonal_unit(d1);
      theta(j) = (c > 0.0) ? 0.0 : theta(j);
    }
  }
  Perturbation out;
  out.W = std::move(W);
  out.t = theta.norm();
  if (out.t > 0.0) {
    out.v = theta / out.t;
  } else {
    out.v = Eigen::VectorXd::Unit(p, 0);
  }
  return out;
}

/// d/dt D(W, v, t) = (-D0 Diag(sin(v t)) + W Diag(cos(v t))) Diag(v).
inline Eigen::MatrixXd tangent_derivative(const Dictionary& D0, const Eigen::MatrixXd& W,
                                          const Eigen::VectorXd& v, double t) {
  detail::check_perturbation(D0, W, v);
  Eigen::MatrixXd out(D0.signal_dim(), D0.atom_count());
  for (Eigen::Index j = 0; j < D0.atom_count(); ++j) {
    const double angle = v(j) * t;
    out.col(j) =
        v(j) * (-std::sin(angle) * D0.atoms().col(j) + std::cos(angle) * W.col(j));
  }
  return out;
}

}  // namespace dictlab
