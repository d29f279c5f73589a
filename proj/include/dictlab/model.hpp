#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dictlab/dictionary.hpp"
#include "dictlab/errors.hpp"
#include "dictlab/parallel.hpp"
#include "dictlab/rng.hpp"

namespace dictlab {

enum class CoefficientLaw { SignedUniform };

inline std::string to_string(CoefficientLaw law) {
  switch (law) {
    case CoefficientLaw::SignedUniform:
      return "SignedUniform";
  }
  return "unknown";
}

/// Law of the nonzero coefficients: random sign times a magnitude bounded
/// away from zero.  sigma_alpha is the sub-Gaussian scale used on the
/// theorem side; for a variable bounded by alpha_hi we use alpha_hi itself.
struct CoefficientModel {
  int k = 2;
  double alpha_lo = 0.1;
  double alpha_hi = 10.0;
  CoefficientLaw law = CoefficientLaw::SignedUniform;

  void validate() const {
    if (!(alpha_lo > 0.0) || !(alpha_lo <= alpha_hi))
      throw invalid_argument("CoefficientModel: need 0 < alpha_lo <= alpha_hi");
    if (k < 1) throw invalid_argument("CoefficientModel: need k >= 1");
  }

  double sigma_alpha() const { return alpha_hi; }
  double mean_abs() const { return 0.5 * (alpha_lo + alpha_hi); }
  double mean_square() const {
    if (alpha_hi == alpha_lo) return alpha_lo * alpha_lo;
    const double hi3 = alpha_hi * alpha_hi * alpha_hi;
    const double lo3 = alpha_lo * alpha_lo * alpha_lo;
    return (hi3 - lo3) / (3.0 * (alpha_hi - alpha_lo));
  }
};

struct NoiseModel {
  double sigma = 0.0;  ///< per-entry Gaussian std deviation

  void validate() const {
    if (sigma < 0.0) throw invalid_argument("NoiseModel: sigma must be >= 0");
  }
};

/// A signal bound to the ground truth that generated it: x = D0 alpha0 + eps.
struct GeneratedSignal {
  Eigen::VectorXd x;
  Eigen::VectorXd alpha0;
  std::vector<int> support;  ///< sorted nonzero set of alpha0
  Eigen::VectorXd sign;      ///< elementwise sign of alpha0, in {-1, 0, 1}
  Eigen::VectorXd eps;
};

struct BatchMetadata {
  Eigen::Index m = 0;
  Eigen::Index p = 0;
  int k = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string distribution;
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
};

struct SignalBatch {
  std::vector<GeneratedSignal> signals;
  std::uint64_t seed = 0;
  BatchMetadata meta;

  std::size_t size() const noexcept { return signals.size(); }
  const GeneratedSignal& operator[](std::size_t i) const { return signals[i]; }
};

/// k atoms uniformly without replacement (partial Fisher-Yates), sorted.
inline std::vector<int> draw_support(Rng& rng, int p, int k) {
  if (k < 1 || k > p) throw invalid_argument("draw_support: need 1 <= k <= p");
  std::vector<int> pool(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(p - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  std::vector<int> J(pool.begin(), pool.begin() + k);
  std::sort(J.begin(), J.end());
  return J;
}

/// Length-p vector supported on J; magnitudes in [alpha_lo, alpha_hi], signs
/// fair coin flips.
inline Eigen::VectorXd draw_coefficients(Rng& rng, const std::vector<int>& J,
                                         const CoefficientModel& model, Eigen::Index p) {
  model.validate();
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(p);
  for (int j : J) {
    if (j < 0 || j >= p) throw invalid_argument("draw_coefficients: index out of range");
    const double magnitude = rng.uniform(model.alpha_lo, model.alpha_hi);
    const double sign = (rng.next_u64() & 1ULL) ? 1.0 : -1.0;
    alpha(j) = sign * magnitude;
  }
  return alpha;
}

inline GeneratedSignal synthesize_signal(const Dictionary& D0, const Eigen::VectorXd& alpha0,
                                         const NoiseModel& noise, Rng& rng) {
  noise.validate();
  if (alpha0.size() != D0.atom_count())
    throw invalid_argument("synthesize_signal: alpha0 length mismatch");
  GeneratedSignal s;
  s.alpha0 = alpha0;
  s.eps = Eigen::VectorXd::Zero(D0.signal_dim());
  if (noise.sigma > 0.0) {
    for (Eigen::Index i = 0; i < s.eps.size(); ++i) s.eps(i) = noise.sigma * rng.normal();
  }
  s.x = D0.atoms() * alpha0 + s.eps;
  s.sign = Eigen::VectorXd::Zero(alpha0.size());
  for (Eigen::Index j = 0; j < alpha0.size(); ++j) {
    if (alpha0(j) > 0.0) {
      s.sign(j) = 1.0;
      s.support.push_back(static_cast<int>(j));
    } else if (alpha0(j) < 0.0) {
      s.sign(j) = -1.0;
      s.support.push_back(static_cast<int>(j));
    }
  }
  return s;
}

/// Signal `index` of the dataset keyed by `seed`, regenerated in isolation.
inline GeneratedSignal generate_signal_at(const Dictionary& D0, const CoefficientModel& coeff,
                                          const NoiseModel& noise, std::uint64_t seed,
                                          std::uint64_t index) {
  Rng rng = Rng::substream(seed, index);
  const auto J = draw_support(rng, static_cast<int>(D0.atom_count()), coeff.k);
  const Eigen::VectorXd alpha0 = draw_coefficients(rng, J, coeff, D0.atom_count());
  return synthesize_signal(D0, alpha0, noise, rng);
}

inline SignalBatch generate_dataset(const Dictionary& D0, const CoefficientModel& coeff,
                                    const NoiseModel& noise, long n, std::uint64_t seed) {
  if (n < 1) throw invalid_argument("generate_dataset: need n >= 1");
  coeff.validate();
  noise.validate();
  SignalBatch batch;
  batch.seed = seed;
  batch.meta = {D0.signal_dim(), D0.atom_count(),       coeff.k,        noise.sigma,
                seed,            to_string(coeff.law),  coeff.alpha_lo, coeff.alpha_hi};
  batch.signals.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    batch.signals[i] = generate_signal_at(D0, coeff, noise, seed, i);
  });
  return batch;
}

// --- persistence --------------------------------------------------------------

/// File layout: one JSON metadata line, '\n', then two little-endian f64
/// column-major blocks: X (m x n) followed by A0 (p x n).
inline void save_batch(const SignalBatch& batch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_argument("save_batch: cannot open " + path);
  const auto n = static_cast<Eigen::Index>(batch.size());
  nlohmann::json header = {
      {"m", batch.meta.m},         {"p", batch.meta.p},
      {"k", batch.meta.k},         {"sigma", batch.meta.sigma},
      {"seed", batch.meta.seed},   {"distribution", batch.meta.distribution},
      {"alpha_lo", batch.meta.alpha_lo}, {"alpha_hi", batch.meta.alpha_hi},
      {"n", n}};
  out << header.dump() << "\n";
  Eigen::MatrixXd X(batch.meta.m, n), A0(batch.meta.p, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.col(i) = batch.signals[static_cast<std::size_t>(i)].x;
    A0.col(i) = batch.signals[static_cast<std::size_t>(i)].alpha0;
  }
  detail::write_matrix_block(out, X);
  detail::write_matrix_block(out, A0);
  if (!out) throw invalid_argument("save_batch: write failed for " + path);
}

/// Loads a batch; eps is reconstructed as x - D0 alpha0 when the generating
/// dictionary is supplied, and left zero otherwise.
inline SignalBatch load_batch(const std::string& path, const Dictionary* D0 = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_argument("load_batch: cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw invalid_argument("load_batch: missing header");
  const auto header = nlohmann::json::parse(header_line);
  SignalBatch batch;
  batch.meta.m = header.at("m").get<Eigen::Index>();
  batch.meta.p = header.at("p").get<Eigen::Index>();
  batch.meta.k = header.at("k").get<int>();
  batch.meta.sigma = header.at("sigma").get<double>();
  batch.meta.seed = header.at("seed").get<std::uint64_t>();
  batch.meta.distribution = header.at("distribution").get<std::string>();
  batch.meta.alpha_lo = header.at("alpha_lo").get<double>();
  batch.meta.alpha_hi = header.at("alpha_hi").get<double>();
  batch.seed = batch.meta.seed;
  const auto n = header.at("n").get<Eigen::Index>();
  Eigen::MatrixXd X(batch.meta.m, n), A0(batch.meta.p, n);
  detail::read_matrix_block(in, X);
  detail::read_matrix_block(in, A0);
  if (D0 && (D0->signal_dim() != batch.meta.m || D0->atom_count() != batch.meta.p))
    throw invalid_argument("load_batch: dictionary shape mismatch");
  batch.signals.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& s = batch.signals[static_cast<std::size_t>(i)];
    s.x = X.col(i);
    s.alpha0 = A0.col(i);
    s.sign = Eigen::VectorXd::Zero(batch.meta.p);
    for (Eigen::Index j = 0; j < batch.meta.p; ++j) {
      if (s.alpha0(j) > 0.0) {
        s.sign(j) = 1.0;
        s.support.push_back(static_cast<int>(j));
      } else if (s.alpha0(j) < 0.0) {
        s.sign(j) = -1.0;
        s.support.push_back(static_cast<int>(j));
      }
    }
    s.eps = D0 ? Eigen::VectorXd(s.x - D0->atoms() * s.alpha0)
               : Eigen::VectorXd(Eigen::VectorXd::Zero(batch.meta.m));
  }
  return batch;
}

/// One signal per row: the m entries of x, then the p entries of alpha0.
inline void export_batch_csv(const SignalBatch& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw invalid_argument("export_batch_csv: cannot open " + path);
  out.precision(17);
  for (const auto& s : batch.signals) {
    for (Eigen::Index i = 0; i < s.x.size(); ++i) {
      if (i) out << ",";
      out << s.x(i);
    }
    for (Eigen::Index j = 0; j < s.alpha0.size(); ++j) out << "," << s.alpha0(j);
    out << "\n";
  }
}

}  // namespace dictlab
