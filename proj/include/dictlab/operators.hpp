#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "dictlab/dictionary.hpp"
#include "dictlab/perturbation.hpp"
#include "dictlab/support_algebra.hpp"

namespace dictlab {

/// Restricted operators along the curve t -> D(W, v, t) together with their
/// closed-form t-derivatives:
///   d/dt P_J(t)              = 2 sym( R_J (I - P_J) )
///   d/dt [Theta_J D_J^T](t)  = Theta_J ( [dD]_J^T (I - P_J) - D_J^T R_J^T )
///   d/dt Theta_J(t)          = -2 sym( Theta_J [dD]_J^T D_J Theta_J )
/// with R_J = D_J Theta_J [dD]_J^T.
struct SupportOperators {
  Eigen::MatrixXd projector;      ///< P_J(t), m x m
  Eigen::MatrixXd theta;          ///< Theta_J(t), k x k
  Eigen::MatrixXd theta_D_t;      ///< Theta_J(t) D_J(t)^T, k x m
  Eigen::MatrixXd d_projector;
  Eigen::MatrixXd d_theta;
  Eigen::MatrixXd d_theta_D_t;
};

inline SupportOperators support_operators(const Dictionary& D0, const Eigen::MatrixXd& W,
                                          const Eigen::VectorXd& v, double t,
                                          std::span<const int> J) {
  const Dictionary Dt = perturb(D0, W, v, t);
  const SupportAlgebra algebra = support_algebra(Dt.atoms(), J);
  const Eigen::MatrixXd dD = tangent_derivative(D0, W, v, t);
  const Eigen::MatrixXd dD_J = select_columns(dD, J);

  SupportOperators ops;
  ops.projector = algebra.projector();
  ops.theta = algebra.theta;
  ops.theta_D_t = algebra.theta * algebra.atoms.transpose();

  const Eigen::Index m = D0.signal_dim();
  const Eigen::MatrixXd R = algebra.atoms * algebra.theta * dD_J.transpose();
  const Eigen::MatrixXd complement = Eigen::MatrixXd::Identity(m, m) - ops.projector;
  const Eigen::MatrixXd RP = R * complement;
  ops.d_projector = RP + RP.transpose();
  ops.d_theta_D_t =
      algebra.theta * (dD_J.transpose() * complement - algebra.atoms.transpose() * R.transpose());
  const Eigen::MatrixXd core = algebra.theta * dD_J.transpose() * algebra.atoms * algebra.theta;
  ops.d_theta = -(core + core.transpose());
  return ops;
}

}  // namespace dictlab
