#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dictlab/dictionary.hpp"
#include "dictlab/errors.hpp"
#include "dictlab/model.hpp"
#include "dictlab/parallel.hpp"
#include "dictlab/perturbation.hpp"
#include "dictlab/support_algebra.hpp"

namespace dictlab {

/// Distribution scalars entering the theorem-side quantities.
struct ModelScalars {
  double E_alpha2 = 0.0;     ///< E[alpha^2]
  double E_abs_alpha = 0.0;  ///< E[|alpha|]
  double sigma_alpha = 0.0;  ///< sub-Gaussian scale of the coefficient law
  double alpha_lower = 0.0;
  double alpha_upper = 0.0;

  double q_alpha() const { return E_alpha2 / (sigma_alpha * sigma_alpha); }
  double Q_alpha() const { return E_alpha2 / (sigma_alpha * E_abs_alpha); }
  double q_alpha_bounded() const { return E_alpha2 / (alpha_upper * E_abs_alpha); }

  static ModelScalars from(const CoefficientModel& model) {
    model.validate();
    ModelScalars s;
    s.E_alpha2 = model.mean_square();
    s.E_abs_alpha = model.mean_abs();
    s.sigma_alpha = model.sigma_alpha();
    s.alpha_lower = model.alpha_lo;
    s.alpha_upper = model.alpha_hi;
    return s;
  }
};

inline double q_t_factor(int k, double mu_t) {
  const double k_mu = static_cast<double>(k) * mu_t;
  if (!(k_mu < 1.0))
    throw condition_violated_error("Q_t: k*mu(t) >= 1 makes 1 - k*mu(t) nonpositive");
  return 1.0 / std::sqrt(1.0 - k_mu);
}

// --- surrogate difference and its six-term expansion ---------------------------

/// The six bilinear/quadratic forms whose sum equals
/// delta phi_x = phi_x(D(t)|s) - phi_x(D0|s).
struct ZetaTerms {
  double z_aa = 0.0;
  double z_ae = 0.0;
  double z_ee = 0.0;
  double z_sa = 0.0;
  double z_se = 0.0;
  double z_ss = 0.0;

  double sum() const { return z_aa + z_ae + z_ee + z_sa + z_se + z_ss; }
};

inline ZetaTerms zeta_decomposition(const GeneratedSignal& signal, const Dictionary& D0,
                                    const Eigen::MatrixXd& W, const Eigen::VectorXd& v,
                                    double t, double lambda) {
  const Dictionary Dt = perturb(D0, W, v, t);
  const auto& J = signal.support;
  ZetaTerms z;
  if (J.empty()) return z;
  const SupportAlgebra a0 = support_algebra(D0.atoms(), J);
  const SupportAlgebra at = support_algebra(Dt.atoms(), J);

  Eigen::VectorXd s_J(static_cast<Eigen::Index>(J.size()));
  Eigen::VectorXd alpha_J(static_cast<Eigen::Index>(J.size()));
  for (std::size_t a = 0; a < J.size(); ++a) {
    s_J(static_cast<Eigen::Index>(a)) = signal.sign(J[a]);
    alpha_J(static_cast<Eigen::Index>(a)) = signal.alpha0(J[a]);
  }

  const Eigen::VectorXd u = a0.atoms * alpha_J;  // D0 alpha0
  const Eigen::VectorXd& eps = signal.eps;
  const Eigen::VectorXd p0_u = a0.project(u), pt_u = at.project(u);
  const Eigen::VectorXd p0_e = a0.project(eps), pt_e = at.project(eps);

  z.z_aa = 0.5 * (u.dot(p0_u) - u.dot(pt_u));
  z.z_ae = u.dot(p0_e) - u.dot(pt_e);
  z.z_ee = 0.5 * (eps.dot(p0_e) - eps.dot(pt_e));

  const auto backsolve = [](const SupportAlgebra& alg, const Eigen::VectorXd& y) {
    return Eigen::VectorXd(alg.llt.solve(Eigen::VectorXd(alg.atoms.transpose() * y)));
  };
  z.z_sa = -lambda * s_J.dot(backsolve(a0, u) - backsolve(at, u));
  z.z_se = -lambda * s_J.dot(backsolve(a0, eps) - backsolve(at, eps));
  z.z_ss = 0.5 * lambda * lambda *
           (s_J.dot(a0.llt.solve(s_J)) - s_J.dot(at.llt.solve(s_J)));
  return z;
}

namespace detail {

/// D0-side quantities shared by every probe of the same batch.
struct BatchBaseline {
  std::vector<double> f0;          ///< f_{x^i}(D0)
  std::vector<double> phi0;        ///< phi_{x^i}(D0 | s0^i)
  std::vector<char> certified0;    ///< exact-recovery certificate at D0
  std::vector<double> loss0;       ///< L_{x^i}(D0, alpha0^i)
  double mean_f0 = 0.0;
  double mean_phi0 = 0.0;
};

inline BatchBaseline batch_baseline(const SignalBatch& batch, const Dictionary& D0,
                                    double lambda, double tol, int max_iter) {
  BatchBaseline base;
  const std::size_t n = batch.size();
  base.f0.resize(n);
  base.phi0.resize(n);
  base.certified0.resize(n);
  base.loss0.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& s = batch[i];
    base.f0[i] = f_value(D0.atoms(), s.x, lambda, tol, max_iter);
    base.phi0[i] = phi(D0.atoms(), s, lambda, static_cast<long>(i));
    base.certified0[i] = certify_exact_recovery(D0.atoms(), s, lambda).recovered ? 1 : 0;
    base.loss0[i] = 0.5 * s.eps.squaredNorm() + lambda * s.alpha0.lpNorm<1>();
  });
  base.mean_f0 = compensated_sum(base.f0) / static_cast<double>(n);
  base.mean_phi0 = compensated_sum(base.phi0) / static_cast<double>(n);
  return base;
}

struct ProbePointEval {
  double delta_F = 0.0;
  double delta_Phi = 0.0;
  double r_n = 0.0;
};

inline ProbePointEval evaluate_probe_point(const SignalBatch& batch, const Dictionary& D0,
                                           const BatchBaseline& base, const Eigen::MatrixXd& W,
                                           const Eigen::VectorXd& v, double t, double lambda,
                                           double tol, int max_iter) {
  const Dictionary Dt = perturb(D0, W, v, t);
  const std::size_t n = batch.size();
  std::vector<double> ft(n), phit(n), rn(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& s = batch[i];
    ft[i] = f_value(Dt.atoms(), s.x, lambda, tol, max_iter);
    phit[i] = phi(Dt.atoms(), s, lambda, static_cast<long>(i));
    const bool coincide_t = certify_exact_recovery(Dt.atoms(), s, lambda).recovered;
    if (coincide_t && base.certified0[i]) {
      rn[i] = 0.0;
    } else {
      const double loss_t =
          0.5 * (s.x - Dt.atoms() * s.alpha0).squaredNorm() + lambda * s.alpha0.lpNorm<1>();
      rn[i] = loss_t + base.loss0[i];
    }
  });
  ProbePointEval eval;
  const double inv_n = 1.0 / static_cast<double>(n);
  eval.delta_F = compensated_sum(ft) * inv_n - base.mean_f0;
  eval.delta_Phi = compensated_sum(phit) * inv_n - base.mean_phi0;
  eval.r_n = compensated_sum(rn) * inv_n;
  return eval;
}

}  // namespace detail

/// Delta F_n(W, v, t) = F_n(D(W, v, t)) - F_n(D0).
inline double delta_F(const SignalBatch& batch, const Dictionary& D0, const Eigen::MatrixXd& W,
                      const Eigen::VectorXd& v, double t, double lambda, double tol = 1e-10,
                      int max_iter = 100000) {
  return F_n(perturb(D0, W, v, t).atoms(), batch, lambda, tol, max_iter) -
         F_n(D0.atoms(), batch, lambda, tol, max_iter);
}

/// Delta Phi_n(W, v, t) with each signal's ground-truth sign pattern.
inline double delta_Phi(const SignalBatch& batch, const Dictionary& D0,
                        const Eigen::MatrixXd& W, const Eigen::VectorXd& v, double t,
                        double lambda) {
  return Phi_n(perturb(D0, W, v, t).atoms(), batch, lambda) -
         Phi_n(D0.atoms(), batch, lambda);
}

/// Residual r_n: mean over signals of the indicator of failed coincidence
/// (certificate at radius t or at 0) times L_x(D(t), alpha0) + L_x(D0, alpha0).
inline double residual_rn(const SignalBatch& batch, const Dictionary& D0,
                          const Eigen::MatrixXd& W, const Eigen::VectorXd& v, double t,
                          double lambda) {
  const Dictionary Dt = perturb(D0, W, v, t);
  const std::size_t n = batch.size();
  std::vector<double> rn(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& s = batch[i];
    const bool ok = certify_exact_recovery(Dt.atoms(), s, lambda).recovered &&
                    certify_exact_recovery(D0.atoms(), s, lambda).recovered;
    if (ok) {
      rn[i] = 0.0;
    } else {
      const double loss_t =
          0.5 * (s.x - Dt.atoms() * s.alpha0).squaredNorm() + lambda * s.alpha0.lpNorm<1>();
      const double loss_0 = 0.5 * s.eps.squaredNorm() + lambda * s.alpha0.lpNorm<1>();
      rn[i] = loss_t + loss_0;
    }
  });
  return compensated_sum(rn) / static_cast<double>(n);
}

/// One sampled probe of the (W, v) landscape at fixed radius t.
struct ProbeEvaluation {
  double delta_F = 0.0;
  double delta_Phi = 0.0;
  double r_n = 0.0;
  bool coordinate_extreme = false;  ///< v = e_j probe rather than a random draw
};

struct ProbeResult {
  double min_delta_F = std::numeric_limits<double>::infinity();
  double min_delta_Phi = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd argmin_W;
  Eigen::VectorXd argmin_v;
  int argmin_index = -1;
  std::vector<ProbeEvaluation> evaluations;
};

/// Randomized stand-in for the infimum over (W, v): evaluates n_probe random
/// pairs (v on the positive orthant of the sphere) plus, optionally, the
/// coordinate-aligned extremes v = e_j.  Deterministic given the seed, and
/// the random substream of probe q does not depend on n_probe, so the minimum
/// over a longer run extends the minimum over a shorter one.
inline ProbeResult probe_infimum(const SignalBatch& batch, const Dictionary& D0, double t,
                                 double lambda, int n_probe, std::uint64_t seed,
                                 bool coordinate_extremes = true, double tol = 1e-10,
                                 int max_iter = 100000) {
  if (n_probe < 1) throw invalid_argument("probe_infimum: need n_probe >= 1");
  const detail::BatchBaseline base = detail::batch_baseline(batch, D0, lambda, tol, max_iter);
  const Eigen::Index p = D0.atom_count();

  ProbeResult result;
  auto consider = [&](const Eigen::MatrixXd& W, const Eigen::VectorXd& v, bool extreme) {
    const auto eval =
        detail::evaluate_probe_point(batch, D0, base, W, v, t, lambda, tol, max_iter);
    ProbeEvaluation record{eval.delta_F, eval.delta_Phi, eval.r_n, extreme};
    result.evaluations.push_back(record);
    result.min_delta_Phi = std::min(result.min_delta_Phi, eval.delta_Phi);
    if (eval.delta_F < result.min_delta_F) {
      result.min_delta_F = eval.delta_F;
      result.argmin_W = W;
      result.argmin_v = v;
      result.argmin_index = static_cast<int>(result.evaluations.size()) - 1;
    }
  };

  for (int q = 0; q < n_probe; ++q) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(q));
    const Eigen::MatrixXd W = sample_tangent(rng, D0);
    const Eigen::VectorXd v = sample_velocity(rng, p, /*positive=*/true);
    consider(W, v, false);
  }
  if (coordinate_extremes) {
    // Keyed off a fixed offset so the random substreams above stay aligned
    // across different n_probe values.
    constexpr std::uint64_t kExtremeOffset = 0x100000000ULL;
    for (Eigen::Index j = 0; j < p; ++j) {
      Rng rng = Rng::substream(seed, kExtremeOffset + static_cast<std::uint64_t>(j));
      const Eigen::MatrixXd W = sample_tangent(rng, D0);
      consider(W, Eigen::VectorXd::Unit(p, j), true);
    }
  }
  return result;
}

// --- exact recovery frequency --------------------------------------------------

struct CoincideResult {
  double frequency = 0.0;          ///< fraction of certified trials
  double probability_floor = 0.0;  ///< 1 - 2 exp(-lambda^2 (2-Q_t^2)^2 / (5 (t'^2 s_a^2 + m s^2)))
  int trials = 0;
};

/// Empirical probability that the Lasso at a freshly perturbed dictionary
/// D(W, v, t') recovers the exact sign pattern of a fresh signal, against the
/// theoretical failure bound.  Requires k mu(t) < 1/2 and lambda <= (4/9) alpha_lo.
inline CoincideResult coincide_frequency(const Dictionary& D0, const CoefficientModel& coeff,
                                         const NoiseModel& noise, double t_prime, double t,
                                         double lambda, int n_trials, std::uint64_t seed) {
  if (n_trials < 1) throw invalid_argument("coincide_frequency: need n_trials >= 1");
  if (t_prime < 0.0 || t_prime > t)
    throw invalid_argument("coincide_frequency: need 0 <= t' <= t");
  const double mu_t = coherence_radius(D0.mu0(), t);
  if (!(static_cast<double>(coeff.k) * mu_t < 0.5))
    throw condition_violated_error("coincide_frequency: k*mu(t) >= 1/2");
  if (!(lambda > 0.0) || lambda > (4.0 / 9.0) * coeff.alpha_lo)
    throw condition_violated_error("coincide_frequency: lambda outside (0, (4/9)*alpha_lo]");

  const double q_sq = 1.0 / (1.0 - static_cast<double>(coeff.k) * mu_t);
  const double m = static_cast<double>(D0.signal_dim());
  const double sa = coeff.sigma_alpha();
  const double variance = t_prime * t_prime * sa * sa + m * noise.sigma * noise.sigma;
  double floor = 1.0;
  if (variance > 0.0) {
    const double exponent =
        lambda * lambda * (2.0 - q_sq) * (2.0 - q_sq) / (5.0 * variance);
    floor = 1.0 - 2.0 * std::exp(-exponent);
  }

  std::vector<char> hits(static_cast<std::size_t>(n_trials));
  parallel_for(static_cast<std::size_t>(n_trials), [&](std::size_t i) {
    Rng rng = Rng::substream(seed, i);
    const auto J = draw_support(rng, static_cast<int>(D0.atom_count()), coeff.k);
    const Eigen::VectorXd alpha0 = draw_coefficients(rng, J, coeff, D0.atom_count());
    const GeneratedSignal s = synthesize_signal(D0, alpha0, noise, rng);
    const Eigen::MatrixXd W = sample_tangent(rng, D0);
    const Eigen::VectorXd v = sample_velocity(rng, D0.atom_count(), /*positive=*/false);
    const Dictionary Dt = perturb(D0, W, v, t_prime);
    hits[i] = certify_exact_recovery(Dt.atoms(), s, lambda).recovered ? 1 : 0;
  });
  long count = 0;
  for (char h : hits) count += h;
  CoincideResult out;
  out.frequency = static_cast<double>(count) / static_cast<double>(n_trials);
  out.probability_floor = floor;
  out.trials = n_trials;
  return out;
}

// --- theorem-side bound evaluation ----------------------------------------------

/// Universal constants of the detailed local-minimum theorem.  The explicit
/// constants of the quantitative bound (367, 3045, sqrt(5), 4/9, 3) are fixed
/// in code; these c_* only shape the qualitative radius/conditions.
struct TheoremConstants {
  double c0 = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  double c_lambda = 1.0;

  double c_gamma() const { return std::sqrt(5.0) / 3.0 * c_lambda; }

  static TheoremConstants from_json(const nlohmann::json& j) {
    TheoremConstants c;
    if (j.contains("c0")) c.c0 = j.at("c0").get<double>();
    if (j.contains("c1")) c.c1 = j.at("c1").get<double>();
    if (j.contains("c2")) c.c2 = j.at("c2").get<double>();
    if (j.contains("c3")) c.c3 = j.at("c3").get<double>();
    if (j.contains("c_lambda")) c.c_lambda = j.at("c_lambda").get<double>();
    return c;
  }
};

struct DictionaryStats {
  double mu0 = 0.0;
  double spectral_norm = 1.0;
  double delta_k = 0.0;  ///< exact RIP constant, or the bound k*mu0

  static DictionaryStats from(const Dictionary& D, int k) {
    return {D.mu0(), D.spectral_norm(), rip_constant_or_bound(D, k)};
  }
};

/// Every explicit scalar of the quantitative local-minimum theorem at radius
/// t, regularization lambda and sample count n, plus the qualitative
/// conditions of the detailed and noiseless theorems.
struct BoundReport {
  // Evaluation point.
  long m = 0, p = 0, k = 0;
  long n = 0;
  double sigma = 0.0;
  double lambda = 0.0;
  double radius = 0.0;  ///< the radius t the report is evaluated at

  // Quantitative-side scalars.
  double mu_t = 0.0;
  double delta_k = 0.0;
  double Q_t = 0.0;
  double C_t = 0.0;
  double gamma = 0.0;  ///< +inf when t = 0 and sigma = 0
  double gamma_D0 = 0.0;
  double K_script = 0.0;
  double A_const = 0.0;
  double B_const = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  bool lambda_window_nonempty = false;
  double lower_bound = 0.0;  ///< four-term lower bound on inf Delta F_n
  double term_main = 0.0, term_bias = 0.0, term_residual = 0.0, term_sample = 0.0;
  double probability_floor = 0.0;

  // Qualitative (detailed-theorem) side.
  bool coherence_ok = false;
  bool sample_ok = false;
  double theta = 0.0;
  double gamma_thm = 0.0;
  double radius_thm = 0.0;
  double lambda_scale_thm = 0.0;

  // Noiseless/bounded variant.
  bool noiseless_coherence_ok = false;
  bool noiseless_sample_ok = false;
  double noiseless_radius = 0.0;
  double noiseless_lambda_scale = 0.0;

  nlohmann::json to_json() const;
};

inline BoundReport bound_report(long m, long p, int k, const DictionaryStats& stats,
                                const ModelScalars& scalars, double sigma, double lambda,
                                double t, long n,
                                const TheoremConstants& constants = TheoremConstants{}) {
  if (m < 1 || p < 1 || k < 1 || k > p || n < 2 || sigma < 0.0 || t < 0.0 || !(lambda > 0.0))
    throw invalid_argument("bound_report: bad arguments");

  BoundReport r;
  r.m = m;
  r.p = p;
  r.k = k;
  r.n = n;
  r.sigma = sigma;
  r.lambda = lambda;
  r.radius = t;
  r.delta_k = stats.delta_k;
  r.mu_t = coherence_radius(stats.mu0, t);

  const double k_mu_t = static_cast<double>(k) * r.mu_t;
  if (!(k_mu_t < 0.5))
    throw condition_violated_error("bound_report: condition k*mu(t) < 1/2 fails (k*mu(t) = " +
                                   std::to_string(k_mu_t) + ")");
  if (!(t < std::sqrt(1.0 - stats.delta_k)))
    throw condition_violated_error("bound_report: condition t < sqrt(1 - delta_k) fails");

  r.Q_t = 1.0 / std::sqrt(1.0 - k_mu_t);
  r.C_t = 1.0 / (std::sqrt(1.0 - stats.delta_k) - t);
  const double q_sq = r.Q_t * r.Q_t;

  const double sa = scalars.sigma_alpha;
  const double noise_scale = std::sqrt(t * t * sa * sa + static_cast<double>(m) * sigma * sigma);
  r.gamma = noise_scale > 0.0
                ? lambda * (2.0 - q_sq) / (std::sqrt(5.0) * noise_scale)
                : std::numeric_limits<double>::infinity();
  r.gamma_D0 = stats.mu0 > 0.0
                   ? 1.0 / (stats.spectral_norm * static_cast<double>(k) * stats.mu0)
                   : std::numeric_limits<double>::infinity();

  r.lambda_min = 3.0 * noise_scale / (2.0 - q_sq);
  r.lambda_max = (4.0 / 9.0) * scalars.alpha_lower;
  r.lambda_window_nonempty = r.lambda_min <= r.lambda_max;

  const double k_over_p = static_cast<double>(k) / static_cast<double>(p);
  r.K_script = r.C_t * (stats.spectral_norm * std::sqrt(k_over_p) + t);
  r.A_const = 367.0 * (t * t * sa * sa + 2.0 * m * sigma * sigma + 2.0 * lambda * k * sa);
  r.B_const = 3045.0 * (k * sa * sa * t + 2.0 * m * sigma * sigma + 2.0 * lambda * k * sa);

  const double gamma_sq = r.gamma * r.gamma;
  const double residual_factor = std::isfinite(r.gamma) ? gamma_sq * std::exp(-gamma_sq) : 0.0;
  const double sample_factor =
      std::sqrt(static_cast<double>(m) * static_cast<double>(p) *
                std::log(static_cast<double>(n)) / static_cast<double>(n));

  r.term_main = (1.0 - r.K_script * r.K_script) * 0.5 * scalars.E_alpha2 * k_over_p * t * t;
  r.term_bias = -q_sq * ((16.0 / 9.0) * q_sq + 3.0) * scalars.E_abs_alpha * t * k_over_p *
                stats.spectral_norm * k_mu_t * lambda;
  r.term_residual = -r.A_const * residual_factor;
  r.term_sample = -r.B_const * sample_factor;
  r.lower_bound = r.term_main + r.term_bias + r.term_residual + r.term_sample;

  const double mpn_term =
      std::pow(static_cast<double>(m) * static_cast<double>(p) * static_cast<double>(n) / 9.0,
               -0.5 * static_cast<double>(m) * static_cast<double>(p));
  const double residual_prob =
      std::isfinite(r.gamma) ? std::exp(-4.0 * static_cast<double>(n) * std::exp(-gamma_sq))
                             : 0.0;
  r.probability_floor = 1.0 - mpn_term - residual_prob;

  // Detailed-theorem conditions and radius (configurable universal constants).
  const double c_gamma = constants.c_gamma();
  const double Q_a = scalars.Q_alpha();
  const double q_a = scalars.q_alpha();
  const double norm_k_mu0 = stats.spectral_norm * static_cast<double>(k) * stats.mu0;
  r.theta = std::min(scalars.alpha_lower / sa,
                     Q_a / (3.0 * constants.c0 * static_cast<double>(k) * stats.spectral_norm));
  {
    const double by_n = std::sqrt(2.0 * std::log(static_cast<double>(n)));
    const double by_coherence =
        norm_k_mu0 > 0.0
            ? Q_a / (2.0 * std::sqrt(2.0) * constants.c0 * c_gamma * norm_k_mu0)
            : std::numeric_limits<double>::infinity();
    r.gamma_thm = 0.5 * std::min(by_n, by_coherence);
  }
  {
    const double g = r.gamma_thm;
    const double fluctuation =
        constants.c1 * g * g * g * std::exp(-g * g) + 2.0 * constants.c2 * g * sample_factor;
    r.radius_thm = std::max(4.0 * std::sqrt(2.0) * c_gamma / q_a * static_cast<double>(p) *
                                fluctuation,
                            sigma / sa * std::sqrt(static_cast<double>(m)));
    r.lambda_scale_thm = r.gamma_thm * sa * r.radius_thm;
  }
  {
    const double log_arg =
        69.0 * constants.c1 * c_gamma * c_gamma / q_a * static_cast<double>(p) / r.theta;
    const double rhs = Q_a / (4.0 * std::sqrt(2.0) * constants.c0 * c_gamma *
                              std::sqrt(std::log(log_arg)));
    r.coherence_ok = norm_k_mu0 <= rhs;
    const double g = r.gamma_thm;
    r.sample_ok = std::log(static_cast<double>(n)) / static_cast<double>(n) <=
                  q_a * q_a / constants.c3 /
                      (static_cast<double>(m) * std::pow(static_cast<double>(p), 3.0)) *
                      (r.theta * r.theta) / (g * g * g * g);
  }

  // Noiseless/bounded variant, built on q_alpha_bounded.
  {
    const double q_b = scalars.q_alpha_bounded();
    const double log_n_over_n = std::log(static_cast<double>(n)) / static_cast<double>(n);
    r.noiseless_radius =
        8.0 * constants.c1 * constants.c_lambda / q_b *
        std::sqrt(static_cast<double>(k) * static_cast<double>(m) *
                  std::pow(static_cast<double>(p), 3.0) * log_n_over_n);
    r.noiseless_lambda_scale = 0.5 * constants.c_lambda * scalars.alpha_upper *
                               std::sqrt(static_cast<double>(k)) * r.noiseless_radius;
    r.noiseless_coherence_ok =
        stats.spectral_norm * std::pow(static_cast<double>(k), 1.5) * stats.mu0 <=
        q_b / (constants.c0 * constants.c_lambda);
    const double budget =
        scalars.E_alpha2 / (scalars.alpha_upper * scalars.alpha_upper) /
        (9.0 * constants.c1 * constants.c_lambda * constants.c_lambda) *
        std::min(scalars.alpha_lower / sa,
                 Q_a / (5.0 * constants.c0 * static_cast<double>(k) * stats.spectral_norm));
    r.noiseless_sample_ok =
        log_n_over_n <= budget * budget / (static_cast<double>(k) * static_cast<double>(k) *
                                           static_cast<double>(m) *
                                           std::pow(static_cast<double>(p), 3.0));
  }
  return r;
}

inline BoundReport bound_report(const Dictionary& D0, int k, const ModelScalars& scalars,
                                double sigma, double lambda, double t, long n,
                                const TheoremConstants& constants = TheoremConstants{}) {
  return bound_report(D0.signal_dim(), D0.atom_count(), k, DictionaryStats::from(D0, k),
                      scalars, sigma, lambda, t, n, constants);
}

inline nlohmann::json BoundReport::to_json() const {
  auto finite_or_null = [](double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  return nlohmann::json{
      {"m", m},
      {"p", p},
      {"k", k},
      {"n", n},
      {"sigma", sigma},
      {"lambda", lambda},
      {"radius", radius},
      {"mu_t", mu_t},
      {"delta_k", delta_k},
      {"Q_t", Q_t},
      {"C_t", C_t},
      {"gamma", finite_or_null(gamma)},
      {"gamma_D0", finite_or_null(gamma_D0)},
      {"K_script", K_script},
      {"A_const", A_const},
      {"B_const", B_const},
      {"lambda_window", {lambda_min, lambda_max}},
      {"lambda_window_nonempty", lambda_window_nonempty},
      {"lower_bound", lower_bound},
      {"lower_bound_terms",
       {{"main", term_main},
        {"bias", term_bias},
        {"residual", term_residual},
        {"sample", term_sample}}},
      {"probability_floor", probability_floor},
      {"coherence_ok", coherence_ok},
      {"sample_ok", sample_ok},
      {"theta", theta},
      {"gamma_thm", finite_or_null(gamma_thm)},
      {"radius_thm", radius_thm},
      {"lambda_scale_thm", lambda_scale_thm},
      {"noiseless",
       {{"radius", noiseless_radius},
        {"lambda_scale", noiseless_lambda_scale},
        {"coherence_ok", noiseless_coherence_ok},
        {"sample_ok", noiseless_sample_ok}}}};
}

// --- Monte-Carlo expectation identities -----------------------------------------

struct ExpectationCheck {
  std::string name;
  double empirical = 0.0;
  double expected = 0.0;   ///< exact value, or an upper bound for inequalities
  double std_error = 0.0;
  bool is_upper_bound = false;
  bool pass = false;  ///< within 3 standard errors (one-sided for bounds)
};

struct ExpectationReport {
  std::vector<ExpectationCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Monte-Carlo verification of the support-expectation identities
/// E||v_J||^2 = k/p and E||[D0]_J^T [D0]_J - I||_F^2 = ||D0^T D0 - I||_F^2
/// * k(k-1)/(p(p-1)), plus the perturbed cross-term upper bound.
inline ExpectationReport expectation_identities(const Dictionary& D0, int k, int n_mc,
                                                std::uint64_t seed, double t = 0.01) {
  if (n_mc < 1000) throw invalid_argument("expectation_identities: need n_mc >= 1000");
  const auto p = static_cast<int>(D0.atom_count());
  if (k < 1 || k > p) throw invalid_argument("expectation_identities: need 1 <= k <= p");

  Rng setup = Rng::substream(seed, 0xfeed);
  const Eigen::VectorXd v = sample_velocity(setup, p, false);
  const Eigen::MatrixXd W = sample_tangent(setup, D0);
  const Dictionary Dt = perturb(D0, W, v, t);
  const double delta_k = rip_constant_or_bound(D0, k);
  const double C_t = t < std::sqrt(std::max(1.0 - delta_k, 0.0))
                         ? 1.0 / (std::sqrt(1.0 - delta_k) - t)
                         : std::numeric_limits<double>::infinity();

  const Eigen::MatrixXd gram0 =
      D0.atoms().transpose() * D0.atoms() - Eigen::MatrixXd::Identity(p, p);
  const double offdiag_sq = gram0.squaredNorm();

  std::vector<double> v_norm_sq(static_cast<std::size_t>(n_mc));
  std::vector<double> gram_dev_sq(static_cast<std::size_t>(n_mc));
  std::vector<double> cross(static_cast<std::size_t>(n_mc));
  parallel_for(static_cast<std::size_t>(n_mc), [&](std::size_t i) {
    Rng rng = Rng::substream(seed, i);
    const auto J = draw_support(rng, p, k);
    double vsq = 0.0;
    for (int j : J) vsq += v(j) * v(j);
    v_norm_sq[i] = vsq;
    const Eigen::MatrixXd G0 = select_columns(D0.atoms(), J);
    gram_dev_sq[i] =
        (G0.transpose() * G0 - Eigen::MatrixXd::Identity(k, k)).squaredNorm();
    const Eigen::MatrixXd Gt = select_columns(Dt.atoms(), J);
    cross[i] = (Gt.transpose() * Gt - Eigen::MatrixXd::Identity(k, k)).norm() *
               std::sqrt(vsq);
  });

  auto summarize = [n_mc](const std::vector<double>& samples, const std::string& name,
                          double expected, bool upper) {
    const double mean = compensated_sum(samples) / static_cast<double>(n_mc);
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= std::max(1.0, static_cast<double>(n_mc - 1));
    const double se = std::sqrt(var / static_cast<double>(n_mc));
    ExpectationCheck check{name, mean, expected, se, upper, false};
    check.pass = upper ? mean <= expected + 3.0 * se : std::abs(mean - expected) <= 3.0 * se;
    return check;
  };

  const double k_over_p = static_cast<double>(k) / static_cast<double>(p);
  ExpectationReport report;
  report.checks.push_back(summarize(v_norm_sq, "E||v_J||^2 = k/p", k_over_p, false));
  report.checks.push_back(summarize(
      gram_dev_sq, "E||D_J^T D_J - I||_F^2 = ||D^T D - I||_F^2 k(k-1)/(p(p-1))",
      offdiag_sq * static_cast<double>(k) * (k - 1.0) /
          (static_cast<double>(p) * (p - 1.0)),
      false));
  const double cross_bound =
      std::sqrt(offdiag_sq) *
          std::sqrt((k - 1.0) / (static_cast<double>(p) - 1.0)) * k_over_p +
      2.0 * C_t * t * k_over_p;
  report.checks.push_back(
      summarize(cross, "E{||D_J(t)^T D_J(t) - I||_F ||v_J||} <= bound", cross_bound, true));
  return report;
}

}  // namespace dictlab
