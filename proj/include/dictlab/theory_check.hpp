#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "dictlab/dictionary.hpp"
#include "dictlab/model.hpp"
#include "dictlab/operators.hpp"
#include "dictlab/perturbation.hpp"
#include "dictlab/support_algebra.hpp"
#include "dictlab/theory.hpp"

namespace dictlab {

namespace detail {
inline std::string sci(double v) {
  std::ostringstream out;
  out.precision(3);
  out << std::scientific << v;
  return out.str();
}
}  // namespace detail

struct InvariantCheck {
  std::string name;
  bool pass = false;
  bool informational = false;  ///< reported but never fails the suite
  double worst = 0.0;          ///< worst observed slack / violation
  std::string detail;
};

/// Randomized verification of the theory-side invariants (surrogate
/// decomposition, pathwise sandwich, derivative formulas, operator-difference
/// and coherence bounds, expectation identities, recovery floor).  Everything
/// is seeded; `quick` shrinks the draw counts by 10x.
inline std::vector<InvariantCheck> run_theory_checks(std::uint64_t seed, bool quick = false) {
  std::vector<InvariantCheck> checks;
  const int scale = quick ? 10 : 1;

  const Dictionary had16 = hadamard(16);
  const Dictionary hd16 = hadamard_dirac(16);
  const CoefficientModel coeff{2, 0.1, 10.0};

  // zeta-sum identity across noise levels and radii.
  {
    InvariantCheck c{"zeta_sum_identity", true, false, 0.0, ""};
    const double sigmas[] = {0.0, 0.1};
    const double radii[] = {0.0, 0.01, 0.1};
    const int per_cell = 1000 / (6 * scale) + 1;
    int index = 0;
    for (double sigma : sigmas) {
      for (double t : radii) {
        for (int i = 0; i < per_cell; ++i, ++index) {
          Rng rng = Rng::substream(seed, 0xaa00 + static_cast<std::uint64_t>(index));
          const Dictionary& D0 = (index % 2 == 0) ? had16 : hd16;
          CoefficientModel cm = coeff;
          cm.k = 1 + static_cast<int>(rng.uniform_below(3));
          const auto J = draw_support(rng, static_cast<int>(D0.atom_count()), cm.k);
          const auto alpha0 = draw_coefficients(rng, J, cm, D0.atom_count());
          const auto sig = synthesize_signal(D0, alpha0, NoiseModel{sigma}, rng);
          const auto W = sample_tangent(rng, D0);
          const auto v = sample_velocity(rng, D0.atom_count(), true);
          const double lambda = 0.04;
          const ZetaTerms z = zeta_decomposition(sig, D0, W, v, t, lambda);
          const double dphi = phi(perturb(D0, W, v, t).atoms(), sig, lambda) -
                              phi(D0.atoms(), sig, lambda);
          c.worst = std::max(c.worst, std::abs(dphi - z.sum()));
        }
      }
    }
    c.pass = c.worst <= 1e-10;
    c.detail = "max |delta phi - sum zeta| = " + detail::sci(c.worst);
    checks.push_back(c);
  }

  // Pathwise sandwich Delta F_n >= Delta Phi_n - r_n.
  {
    InvariantCheck c{"pathwise_sandwich", true, false, 0.0, ""};
    for (int rep = 0; rep < std::max(1, 10 / scale); ++rep) {
      Rng rng = Rng::substream(seed, 0xbb00 + static_cast<std::uint64_t>(rep));
      const Dictionary& D0 = (rep % 2 == 0) ? had16 : hd16;
      const auto batch = generate_dataset(D0, coeff, NoiseModel{rep % 2 ? 0.05 : 0.0}, 200,
                                          seed + static_cast<std::uint64_t>(rep));
      const auto W = sample_tangent(rng, D0);
      const auto v = sample_velocity(rng, D0.atom_count(), true);
      const double t = 0.05, lambda = 0.04;
      const double dF = delta_F(batch, D0, W, v, t, lambda);
      const double dPhi = delta_Phi(batch, D0, W, v, t, lambda);
      const double rn = residual_rn(batch, D0, W, v, t, lambda);
      c.worst = std::min(c.worst, dF - (dPhi - rn));
    }
    c.pass = c.worst >= -1e-10;
    c.detail = "min (Delta F_n - Delta Phi_n + r_n) = " + detail::sci(c.worst);
    checks.push_back(c);
  }

  // Derivative formulas against central finite differences.
  {
    InvariantCheck c{"operator_derivatives_fd", true, false, 0.0, ""};
    const double h = 1e-6;
    for (int rep = 0; rep < std::max(2, 100 / scale); ++rep) {
      Rng rng = Rng::substream(seed, 0xcc00 + static_cast<std::uint64_t>(rep));
      const Dictionary& D0 = (rep % 2 == 0) ? had16 : hd16;
      const auto W = sample_tangent(rng, D0);
      const auto v = sample_velocity(rng, D0.atom_count(), true);
      const double t = 0.02 + 0.08 * rng.uniform01();
      const int k = 1 + static_cast<int>(rng.uniform_below(3));
      const auto J = draw_support(rng, static_cast<int>(D0.atom_count()), k);

      const Eigen::MatrixXd dD = tangent_derivative(D0, W, v, t);
      const Eigen::MatrixXd fd_D =
          (perturb(D0, W, v, t + h).atoms() - perturb(D0, W, v, t - h).atoms()) / (2.0 * h);
      c.worst = std::max(c.worst, (dD - fd_D).norm() / std::max(1.0, dD.norm()));

      const auto ops = support_operators(D0, W, v, t, J);
      const auto plus = support_operators(D0, W, v, t + h, J);
      const auto minus = support_operators(D0, W, v, t - h, J);
      const auto rel = [](const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
        return (analytic - fd).norm() / std::max(1.0, analytic.norm());
      };
      c.worst = std::max(c.worst, rel(ops.d_projector,
                                      (plus.projector - minus.projector) / (2.0 * h)));
      c.worst = std::max(c.worst, rel(ops.d_theta, (plus.theta - minus.theta) / (2.0 * h)));
      c.worst = std::max(c.worst,
                         rel(ops.d_theta_D_t, (plus.theta_D_t - minus.theta_D_t) / (2.0 * h)));
    }
    c.pass = c.worst <= 1e-5;
    c.detail = "max relative FD error = " + detail::sci(c.worst);
    checks.push_back(c);
  }

  // Operator-difference norms (2 t C_t ||v_J||, C_t^2, C_t^3 ladder).
  {
    InvariantCheck c{"operator_difference_bounds", true, false, 0.0, ""};
    for (int rep = 0; rep < std::max(10, 1000 / scale); ++rep) {
      Rng rng = Rng::substream(seed, 0xdd00 + static_cast<std::uint64_t>(rep));
      const Dictionary& D0 = (rep % 2 == 0) ? had16 : hd16;
      const int k = 1 + static_cast<int>(rng.uniform_below(3));
      const auto J = draw_support(rng, static_cast<int>(D0.atom_count()), k);
      const auto W = sample_tangent(rng, D0);
      const auto v = sample_velocity(rng, D0.atom_count(), true);
      const double t = 0.1 * rng.uniform01();
      const double delta_k = rip_constant_or_bound(D0, k);
      if (!(t < std::sqrt(1.0 - delta_k))) continue;
      const double C_t = 1.0 / (std::sqrt(1.0 - delta_k) - t);
      double v_J = 0.0;
      for (int j : J) v_J += v(j) * v(j);
      v_J = std::sqrt(v_J);

      const auto at_0 = support_operators(D0, W, v, 0.0, J);
      const auto at_t = support_operators(D0, W, v, t, J);
      c.worst = std::max(c.worst, (at_t.projector - at_0.projector).norm() -
                                      2.0 * t * C_t * v_J);
      c.worst = std::max(c.worst, (at_t.theta_D_t - at_0.theta_D_t).norm() -
                                      2.0 * t * C_t * C_t * v_J);
      const Eigen::MatrixXd theta_diff = at_t.theta - at_0.theta;
      c.worst = std::max(c.worst,
                         theta_diff.selfadjointView<Eigen::Lower>().operatorNorm() -
                             2.0 * t * C_t * C_t * C_t * v_J);
    }
    c.pass = c.worst <= 1e-9;
    c.detail = "max bound violation = " + detail::sci(c.worst);
    checks.push_back(c);
  }

  // (I - P_J(t)) [D0]_J stays within t ||v_J||.
  {
    InvariantCheck c{"projector_complement_bound", true, false, 0.0, ""};
    for (int rep = 0; rep < std::max(10, 500 / scale); ++rep) {
      Rng rng = Rng::substream(seed, 0xee00 + static_cast<std::uint64_t>(rep));
      const Dictionary& D0 = (rep % 2 == 0) ? had16 : hd16;
      const int k = 1 + static_cast<int>(rng.uniform_below(3));
      const auto J = draw_support(rng, static_cast<int>(D0.atom_count()), k);
      const auto W = sample_tangent(rng, D0);
      const auto v = sample_velocity(rng, D0.atom_count(), true);
      const double t = 0.2 * rng.uniform01();
      const Dictionary Dt = perturb(D0, W, v, t);
      const SupportAlgebra alg = support_algebra(Dt.atoms(), J);
      const Eigen::MatrixXd D0_J = select_columns(D0.atoms(), J);
      double v_J = 0.0;
      for (int j : J) v_J += v(j) * v(j);
      v_J = std::sqrt(v_J);
      const Eigen::MatrixXd resid = D0_J - alg.atoms * alg.llt.solve(alg.atoms.transpose() * D0_J);
      c.worst = std::max(c.worst, resid.norm() - t * v_J);
    }
    c.pass = c.worst <= 1e-9;
    c.detail = "max ||(I-P_J(t)) D0_J|| - t||v_J|| = " + detail::sci(c.worst);
    checks.push_back(c);
  }

  // Theta norms and the irrepresentability operator bound Q_t^2 - 1, over
  // enumerated supports of a perturbed dictionary.
  {
    InvariantCheck c{"coherence_operator_bounds", true, false, 0.0, ""};
    Rng rng = Rng::substream(seed, 0xff01);
    const Dictionary& D0 = had16;
    const int k = 2;
    const double t = 0.05;
    const auto W = sample_tangent(rng, D0);
    const auto v = sample_velocity(rng, D0.atom_count(), true);
    const Dictionary Dt = perturb(D0, W, v, t);
    const double mu_t = coherence_radius(D0.mu0(), t);
    const double k_mu = k * mu_t;
    const double q_sq = 1.0 / (1.0 - k_mu);
    const int p = static_cast<int>(D0.atom_count());
    detail::for_each_subset(p, k, [&](const std::vector<int>& J) {
      const SupportAlgebra alg = support_algebra(Dt.atoms(), J);
      const double theta_inf = alg.theta.cwiseAbs().rowwise().sum().maxCoeff();
      const Eigen::MatrixXd theta_dev =
          alg.theta - Eigen::MatrixXd::Identity(k, k);
      const double theta_dev_inf = theta_dev.cwiseAbs().rowwise().sum().maxCoeff();
      c.worst = std::max(c.worst, theta_inf - 1.0 / (1.0 - k_mu));
      c.worst = std::max(c.worst, theta_dev_inf - k_mu / (1.0 - k_mu));
      std::vector<int> Jc;
      for (int j = 0; j < p; ++j)
        if (std::find(J.begin(), J.end(), j) == J.end()) Jc.push_back(j);
      const Eigen::MatrixXd irrep =
          select_columns(Dt.atoms(), Jc).transpose() * alg.atoms * alg.theta;
      c.worst = std::max(c.worst,
                         irrep.cwiseAbs().rowwise().sum().maxCoeff() - (q_sq - 1.0));
    });
    c.pass = c.worst <= 1e-9;
    c.detail = "max violation over C(16,2) supports = " + detail::sci(c.worst);
    checks.push_back(c);
  }

  // Expectation identities at 3 standard errors.
  {
    const auto report = expectation_identities(hadamard_dirac(8), 3,
                                               std::max(1000, 100000 / scale), seed + 17);
    InvariantCheck c{"expectation_identities", report.all_pass(), false, 0.0, ""};
    for (const auto& item : report.checks)
      c.detail += item.name + (item.pass ? " ok; " : " FAIL; ");
    checks.push_back(c);
  }

  // Exact-recovery floor on a small grid (3-standard-error slack).
  {
    InvariantCheck c{"coincide_floor", true, false, 0.0, ""};
    const int trials = std::max(200, 2000 / scale);
    for (double t_prime : {0.0, 0.01}) {
      for (double sigma : {0.0, 0.005}) {
        const auto res = coincide_frequency(had16, coeff, NoiseModel{sigma}, t_prime,
                                            std::max(t_prime, 0.01), 0.04, trials, seed + 23);
        const double se =
            std::sqrt(std::max(res.frequency * (1.0 - res.frequency), 1e-12) / trials);
        const double slack = res.frequency - (res.probability_floor - 3.0 * se);
        c.worst = std::min(c.worst, slack);
        if (slack < 0.0) c.pass = false;
      }
    }
    c.detail = "min (frequency - floor + 3se) = " + detail::sci(c.worst);
    checks.push_back(c);
  }

  // mu(t) <= mu0 + 3t on random draws: reported, not asserted.
  {
    InvariantCheck c{"mu_radius_bound_empirical", true, true, 0.0, ""};
    int violations = 0;
    for (int rep = 0; rep < std::max(10, 500 / scale); ++rep) {
      Rng rng = Rng::substream(seed, 0xab00 + static_cast<std::uint64_t>(rep));
      const Dictionary& D0 = (rep % 2 == 0) ? had16 : hd16;
      const auto W = sample_tangent(rng, D0);
      const auto v = sample_velocity(rng, D0.atom_count(), true);
      const double t = 0.3 * rng.uniform01();
      const Dictionary Dt = perturb(D0, W, v, t);
      const double excess = Dt.mu0() - coherence_radius(D0.mu0(), t);
      c.worst = std::max(c.worst, excess);
      if (excess > 1e-12) ++violations;
    }
    c.detail = std::to_string(violations) + " violations, max excess " + detail::sci(c.worst);
    checks.push_back(c);
  }

  return checks;
}

}  // namespace dictlab
