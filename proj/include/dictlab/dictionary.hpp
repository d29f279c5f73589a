#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dictlab/errors.hpp"

namespace dictlab {

constexpr double kUnitColumnTol = 1e-10;

namespace detail {

inline double max_offdiag_abs(const Eigen::MatrixXd& gram) {
  const Eigen::Index p = gram.cols();
  double mu = 0.0;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j) mu = std::max(mu, std::abs(gram(i, j)));
  return mu;
}

// Largest singular value by power iteration on the smaller Gram factor.
// Deterministic all-ones start; tolerance 1e-12, cap 1e4 iterations.
inline double spectral_norm_power(const Eigen::MatrixXd& D) {
  const bool tall = D.rows() >= D.cols();
  const Eigen::MatrixXd G = tall ? Eigen::MatrixXd(D.transpose() * D)
                                 : Eigen::MatrixXd(D * D.transpose());
  const Eigen::Index n = G.rows();
  if (n == 0) return 0.0;
  Eigen::VectorXd z = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  double lambda = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd w = G * z;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double lambda_new = w.dot(G * w);
    if (std::abs(lambda_new - lambda) <= 1e-12 * std::max(1.0, std::abs(lambda_new))) {
      lambda = lambda_new;
      break;
    }
    lambda = lambda_new;
    z = w;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace detail

inline double coherence(const Eigen::MatrixXd& D) {
  if (D.cols() < 2) return 0.0;
  return detail::max_offdiag_abs(D.transpose() * D);
}

/// Coherence budget at radius t: mu(t) = mu0 + 3t.
inline double coherence_radius(double mu0, double t) { return mu0 + 3.0 * t; }

/// An m x p matrix with unit l2-norm columns.  Immutable; mutual coherence
/// and spectral norm are computed once at construction.
class Dictionary {
 public:
  explicit Dictionary(Eigen::MatrixXd atoms) : atoms_(std::move(atoms)) {
    if (atoms_.rows() < 1 || atoms_.cols() < 1)
      throw invalid_argument("Dictionary: empty matrix");
    for (Eigen::Index j = 0; j < atoms_.cols(); ++j) {
      if (std::abs(atoms_.col(j).norm() - 1.0) > kUnitColumnTol)
        throw invalid_argument("Dictionary: column " + std::to_string(j) +
                               " is not unit-norm");
    }
    mu0_ = coherence(atoms_);
    spectral_norm_ = detail::spectral_norm_power(atoms_);
  }

  /// Normalizes the columns of `raw` before constructing.
  static Dictionary normalized(Eigen::MatrixXd raw) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const double norm = raw.col(j).norm();
      if (norm <= 0.0)
        throw invalid_argument("Dictionary::normalized: zero column");
      raw.col(j) /= norm;
    }
    return Dictionary(std::move(raw));
  }

  const Eigen::MatrixXd& atoms() const noexcept { return atoms_; }
  Eigen::Index signal_dim() const noexcept { return atoms_.rows(); }
  Eigen::Index atom_count() const noexcept { return atoms_.cols(); }
  double mu0() const noexcept { return mu0_; }
  double spectral_norm() const noexcept { return spectral_norm_; }

 private:
  Eigen::MatrixXd atoms_;
  double mu0_ = 0.0;
  double spectral_norm_ = 0.0;
};

/// Sylvester Hadamard basis: orthogonal m x m, columns scaled by 1/sqrt(m).
inline Dictionary hadamard(int m) {
  if (m < 1 || (m & (m - 1)) != 0)
    throw invalid_argument("hadamard: m must be a power of 2");
  Eigen::MatrixXd H = Eigen::MatrixXd::Ones(1, 1);
  for (int size = 1; size < m; size *= 2) {
    Eigen::MatrixXd next(2 * size, 2 * size);
    next.topLeftCorner(size, size) = H;
    next.topRightCorner(size, size) = H;
    next.bottomLeftCorner(size, size) = H;
    next.bottomRightCorner(size, size) = -H;
    H.swap(next);
  }
  H /= std::sqrt(static_cast<double>(m));
  return Dictionary(std::move(H));
}

/// Concatenation [Hadamard | Identity]: m x 2m, mu0 = 1/sqrt(m), norm sqrt(2).
inline Dictionary hadamard_dirac(int m) {
  const Dictionary H = hadamard(m);
  Eigen::MatrixXd D(m, 2 * m);
  D.leftCols(m) = H.atoms();
  D.rightCols(m) = Eigen::MatrixXd::Identity(m, m);
  return Dictionary(std::move(D));
}

namespace detail {

inline double binomial_count_capped(int p, int k, double cap) {
  double c = 1.0;
  for (int i = 0; i < k; ++i) {
    c *= static_cast<double>(p - i) / static_cast<double>(i + 1);
    if (c > cap) return cap + 1.0;
  }
  return c;
}

// Visits every k-subset of {0,...,p-1} in lexicographic order.
template <typename Visitor>
void for_each_subset(int p, int k, Visitor&& visit) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (;;) {
    visit(idx);
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == p - k + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

}  // namespace detail

/// Exact restricted isometry constant of order k, by enumeration of all
/// C(p, k) supports.  Refuses (with the coherence fallback delta_k <= k*mu0
/// attached) when the enumeration would exceed 10^6 supports.
inline double rip_constant(const Dictionary& D, int k) {
  const int p = static_cast<int>(D.atom_count());
  if (k < 1 || k > p) throw invalid_argument("rip_constant: need 1 <= k <= p");
  if (detail::binomial_count_capped(p, k, 1e6) > 1e6)
    throw combinatorial_guard_error(
        "rip_constant: C(p,k) exceeds 10^6 supports; use the coherence bound "
        "delta_k <= k*mu0",
        static_cast<double>(k) * D.mu0());
  const Eigen::MatrixXd gram = D.atoms().transpose() * D.atoms();
  double delta = 0.0;
  Eigen::MatrixXd sub(k, k);
  detail::for_each_subset(p, k, [&](const std::vector<int>& J) {
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        sub(a, b) = gram(J[static_cast<std::size_t>(a)], J[static_cast<std::size_t>(b)]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub, Eigen::EigenvaluesOnly);
    delta = std::max(delta, eig.eigenvalues().maxCoeff() - 1.0);
    delta = std::max(delta, 1.0 - eig.eigenvalues().minCoeff());
  });
  return delta;
}

/// delta_k if the enumeration fits the guard, else the bound k*mu0.
inline double rip_constant_or_bound(const Dictionary& D, int k) {
  try {
    return rip_constant(D, k);
  } catch (const combinatorial_guard_error& guard) {
    return guard.coherence_bound();
  }
}

// --- CSV / binary persistence ------------------------------------------------

/// CSV layout: first line "m,p", then m rows of p comma-separated values.
inline void save_dictionary_csv(const Dictionary& D, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw invalid_argument("save_dictionary_csv: cannot open " + path);
  out.precision(17);
  out << D.signal_dim() << "," << D.atom_count() << "\n";
  for (Eigen::Index i = 0; i < D.signal_dim(); ++i) {
    for (Eigen::Index j = 0; j < D.atom_count(); ++j) {
      if (j) out << ",";
      out << D.atoms()(i, j);
    }
    out << "\n";
  }
}

inline Dictionary load_dictionary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_argument("load_dictionary_csv: cannot open " + path);
  char comma = 0;
  Eigen::Index m = 0, p = 0;
  if (!(in >> m >> comma >> p) || comma != ',' || m < 1 || p < 1)
    throw invalid_argument("load_dictionary_csv: bad header in " + path);
  Eigen::MatrixXd A(m, p);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      double v = 0.0;
      if (j > 0 && !(in >> comma)) throw invalid_argument("load_dictionary_csv: truncated");
      if (!(in >> v)) throw invalid_argument("load_dictionary_csv: truncated");
      A(i, j) = v;
    }
  }
  return Dictionary(std::move(A));
}

namespace detail {

// Little-endian f64 column-major block, preceded by a one-line JSON header.
inline void write_matrix_block(std::ostream& out, const Eigen::MatrixXd& M) {
  static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");
  out.write(reinterpret_cast<const char*>(M.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(M.size())));
}

inline void read_matrix_block(std::istream& in, Eigen::MatrixXd& M) {
  in.read(reinterpret_cast<char*>(M.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(M.size())));
  if (!in) throw invalid_argument("read_matrix_block: truncated binary block");
}

}  // namespace detail

}  // namespace dictlab
