#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dictlab/dictionary.hpp"
#include "dictlab/errors.hpp"
#include "dictlab/hungarian.hpp"
#include "dictlab/lasso.hpp"
#include "dictlab/model.hpp"
#include "dictlab/parallel.hpp"
#include "dictlab/rng.hpp"
#include "dictlab/support_algebra.hpp"

namespace dictlab {

enum class InitKind { Random, Oracle };

struct LearnConfig {
  int batch_size = 128;
  int epochs = 25;  ///< passes over the data
  InitKind init = InitKind::Random;
  std::optional<Dictionary> oracle;  ///< required when init == Oracle
  double lambda = 0.1;
  double tol = 1e-10;
  int max_iter = 100000;
  std::uint64_t seed = 0;
  double stats_decay = 0.5;        ///< sufficient-statistics damping per minibatch
  double duplicate_gram = 0.999;   ///< |<d_i, d_j>| above this re-seeds the weaker atom
};

struct LearnResult {
  Eigen::MatrixXd dictionary;           ///< unit columns
  std::vector<double> epoch_objectives; ///< F_n on the training batch per epoch
  int replaced_atoms = 0;               ///< degenerate atoms re-seeded
  int rejected_epochs = 0;              ///< epochs rolled back by the descent guard
};

namespace detail {

inline Eigen::MatrixXd random_unit_columns(Rng& rng, Eigen::Index m, Eigen::Index p) {
  Eigen::MatrixXd D(m, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (;;) {
      for (Eigen::Index i = 0; i < m; ++i) D(i, j) = rng.normal();
      const double norm = D.col(j).norm();
      if (norm > 1e-12) {
        D.col(j) /= norm;
        break;
      }
    }
  }
  return D;
}

// Block-coordinate descent on the atoms given sufficient statistics
// A = sum alpha alpha^T and B = sum x alpha^T, with exact renormalization to
// the unit sphere.  Atoms with no accumulated usage are left untouched here.
inline void update_atoms(Eigen::MatrixXd& D, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         int max_passes = 16, double tol = 1e-8) {
  for (int pass = 0; pass < max_passes; ++pass) {
    double moved = 0.0;
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
      const double a_jj = A(j, j);
      if (a_jj <= 1e-12) continue;
      Eigen::VectorXd u = (B.col(j) - D * A.col(j)) / a_jj + D.col(j);
      const double norm = u.norm();
      if (norm > 1e-12) {
        moved = std::max(moved, (u / norm - D.col(j)).lpNorm<Eigen::Infinity>());
        D.col(j) = u / norm;
      }
    }
    if (moved <= tol) break;
  }
}

}  // namespace detail

/// Minibatch dictionary learning: alternates Lasso coding with a
/// block-coordinate atom update on accumulated sufficient statistics,
/// renormalizing atoms to the unit sphere.  An epoch that increases the
/// training objective is rolled back, so the recorded per-epoch objectives
/// are non-increasing.  Deterministic given (batch, config).
inline LearnResult learn_dictionary(const SignalBatch& batch, Eigen::Index p,
                                    const LearnConfig& config) {
  if (batch.size() == 0) throw invalid_argument("learn_dictionary: batch is empty");
  if (p < 1) throw invalid_argument("learn_dictionary: need p >= 1");
  if (config.batch_size < 1 || config.epochs < 1)
    throw invalid_argument("learn_dictionary: bad batch_size or epochs");
  const Eigen::Index m = batch.meta.m;
  const auto n = batch.size();

  LearnResult result;
  Rng init_rng = Rng::substream(config.seed, 0x1717);
  if (config.init == InitKind::Oracle) {
    if (!config.oracle) throw invalid_argument("learn_dictionary: oracle init without oracle");
    if (config.oracle->signal_dim() != m || config.oracle->atom_count() != p)
      throw invalid_argument("learn_dictionary: oracle shape mismatch");
    result.dictionary = config.oracle->atoms();
  } else {
    result.dictionary = detail::random_unit_columns(init_rng, m, p);
  }

  Eigen::MatrixXd stat_A = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd stat_B = Eigen::MatrixXd::Zero(m, p);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_objective = F_n(result.dictionary, batch, config.lambda, config.tol,
                              config.max_iter);
  result.epoch_objectives.push_back(best_objective);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng = Rng::substream(config.seed, 0xec0000ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_below(i)]);

    const Eigen::MatrixXd epoch_start = result.dictionary;
    const Eigen::MatrixXd epoch_A = stat_A;
    const Eigen::MatrixXd epoch_B = stat_B;

    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.batch_size));
      const std::size_t count = end - begin;
      stat_A *= config.stats_decay;
      stat_B *= config.stats_decay;
      std::vector<Eigen::VectorXd> codes(count);
      parallel_for(count, [&](std::size_t i) {
        codes[i] = lasso_solve(result.dictionary, batch[order[begin + i]].x, config.lambda,
                               config.tol, config.max_iter)
                       .alpha;
      });
      // worst-reconstructed signals of this minibatch seed replacement atoms
      std::vector<std::pair<double, std::size_t>> residual_rank(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto& x = batch[order[begin + i]].x;
        stat_A.noalias() += codes[i] * codes[i].transpose();
        stat_B.noalias() += x * codes[i].transpose();
        residual_rank[i] = {(x - result.dictionary * codes[i]).squaredNorm(), i};
      }
      std::sort(residual_rank.begin(), residual_rank.end(),
                [](const auto& a, const auto& b) { return a.first > b.first; });
      detail::update_atoms(result.dictionary, stat_A, stat_B);

      // Re-seed unused atoms and near-duplicate pairs (the copy with less
      // accumulated usage loses) from the worst residuals.
      std::size_t next_seed_source = 0;
      auto reseed = [&](Eigen::Index j) {
        Eigen::VectorXd direction = Eigen::VectorXd::Zero(m);
        while (next_seed_source < count) {
          const std::size_t i = residual_rank[next_seed_source++].second;
          const auto& x = batch[order[begin + i]].x;
          direction = x - result.dictionary * codes[i];
          if (direction.norm() > 1e-10) break;
        }
        result.dictionary.col(j) = direction.norm() > 1e-10
                                       ? Eigen::VectorXd(direction / direction.norm())
                                       : detail::random_unit_columns(init_rng, m, 1).col(0);
        stat_A.row(j).setZero();
        stat_A.col(j).setZero();
        stat_B.col(j).setZero();
        ++result.replaced_atoms;
      };
      for (Eigen::Index j = 0; j < p; ++j)
        if (stat_A(j, j) <= 1e-12) reseed(j);
      for (Eigen::Index j1 = 0; j1 < p; ++j1) {
        for (Eigen::Index j2 = j1 + 1; j2 < p; ++j2) {
          if (std::abs(result.dictionary.col(j1).dot(result.dictionary.col(j2))) >
              config.duplicate_gram) {
            reseed(stat_A(j1, j1) < stat_A(j2, j2) ? j1 : j2);
          }
        }
      }
    }

    const double objective = F_n(result.dictionary, batch, config.lambda, config.tol,
                                 config.max_iter);
    if (objective <= best_objective + 1e-9) {
      best_objective = std::min(best_objective, objective);
      result.epoch_objectives.push_back(objective);
    } else {
      result.dictionary = epoch_start;
      stat_A = epoch_A;
      stat_B = epoch_B;
      ++result.rejected_epochs;
      result.epoch_objectives.push_back(best_objective);
    }
  }
  return result;
}

// --- lambda tuning ---------------------------------------------------------------

struct TuneResult {
  double lambda = 0.0;
  double mean_support = 0.0;
  bool all_empty = false;  ///< every grid point produced empty supports
};

inline std::vector<double> log_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi > lo) || points < 2) throw invalid_argument("log_grid: bad range");
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(points - 1);
  for (int i = 0; i < points; ++i)
    grid[static_cast<std::size_t>(i)] = std::exp(std::log(lo) + step * i);
  return grid;
}

/// Picks the grid point whose mean Lasso support size over the auxiliary
/// batch is closest to target_k, preferring the larger lambda on ties.  When
/// every grid point yields empty supports the largest lambda is returned with
/// `all_empty` set (callers should extend the grid downward).
inline TuneResult tune_lambda(const SignalBatch& aux_batch, const Eigen::MatrixXd& D,
                              std::vector<double> grid, int target_k, double tol = 1e-10,
                              int max_iter = 100000) {
  if (grid.empty()) throw invalid_argument("tune_lambda: empty grid");
  if (aux_batch.size() == 0) throw invalid_argument("tune_lambda: empty auxiliary batch");
  if (target_k < 1) throw invalid_argument("tune_lambda: target_k must be >= 1");
  std::sort(grid.begin(), grid.end());

  TuneResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  double max_mean = 0.0;
  for (double lambda : grid) {
    std::vector<double> sizes(aux_batch.size());
    parallel_for(aux_batch.size(), [&](std::size_t i) {
      sizes[i] = static_cast<double>(
          lasso_solve(D, aux_batch[i].x, lambda, tol, max_iter).support.size());
    });
    const double mean = compensated_sum(sizes) / static_cast<double>(aux_batch.size());
    max_mean = std::max(max_mean, mean);
    const double gap = std::abs(mean - static_cast<double>(target_k));
    if (gap < best_gap || (gap == best_gap && lambda > best.lambda)) {
      best_gap = gap;
      best.lambda = lambda;
      best.mean_support = mean;
    }
  }
  best.all_empty = max_mean == 0.0;
  if (best.all_empty) {
    best.lambda = grid.back();
    best.mean_support = 0.0;
  }
  return best;
}

// --- equivalence-class-aware error -------------------------------------------------

/// Optimal alignment of a learned dictionary with the reference, over column
/// permutations and sign flips.
struct MatchResult {
  std::vector<int> permutation;  ///< reference column j is matched to estimate column permutation[j]
  Eigen::VectorXd signs;         ///< in {-1, +1}
  double matched_error = 0.0;    ///< ||D0 - aligned(D_hat)||_F
  Eigen::Index m = 0, p = 0;
};

/// Assignment on cost 1 - |<d_hat^i, d0^j>|, solved exactly (Hungarian);
/// signs follow the matched correlations (zero correlation maps to +1).
inline MatchResult match_atoms(const Eigen::MatrixXd& D_hat, const Eigen::MatrixXd& D0) {
  if (D_hat.rows() != D0.rows() || D_hat.cols() != D0.cols())
    throw invalid_argument("match_atoms: shape mismatch");
  const Eigen::Index p = D0.cols();
  const Eigen::MatrixXd correlation = D_hat.transpose() * D0;  // (i, j) = <d_hat^i, d0^j>
  const Eigen::MatrixXd cost =
      Eigen::MatrixXd::Ones(p, p) - correlation.cwiseAbs();
  // Assign reference columns (rows of cost^T) to estimate columns.
  const std::vector<int> col_of_ref = solve_assignment(cost.transpose());

  MatchResult out;
  out.m = D0.rows();
  out.p = p;
  out.permutation = col_of_ref;
  out.signs = Eigen::VectorXd::Ones(p);
  double error_sq = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const int i = col_of_ref[static_cast<std::size_t>(j)];
    const double c = correlation(i, j);
    out.signs(j) = c < 0.0 ? -1.0 : 1.0;
    error_sq += (D0.col(j) - out.signs(j) * D_hat.col(i)).squaredNorm();
  }
  out.matched_error = std::sqrt(std::max(error_sq, 0.0));
  return out;
}

enum class ErrorMode { OverComplete, Orthogonal };

/// matched_error / sqrt(m p^3) (over-complete runs) or / sqrt(m) (orthogonal).
inline double normalized_error(const MatchResult& match, ErrorMode mode) {
  const double m = static_cast<double>(match.m);
  const double p = static_cast<double>(match.p);
  switch (mode) {
    case ErrorMode::OverComplete:
      return match.matched_error / std::sqrt(m * p * p * p);
    case ErrorMode::Orthogonal:
      return match.matched_error / std::sqrt(m);
  }
  throw invalid_argument("normalized_error: unknown mode");
}

}  // namespace dictlab
