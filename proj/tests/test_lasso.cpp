#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "dictlab/dictionary.hpp"
#include "dictlab/lasso.hpp"
#include "dictlab/rng.hpp"

using namespace dictlab;

namespace {

// Independent oracle: enumerate all 3^p sign patterns, solve each restricted
// stationarity system, keep the candidates whose signs are self-consistent,
// and take the smallest Lasso objective among them.
double lasso_brute_force(const Eigen::MatrixXd& D, const Eigen::VectorXd& x, double lambda) {
  const int p = static_cast<int>(D.cols());
  double best = 0.5 * x.squaredNorm();  // the all-zero pattern
  long patterns = 1;
  for (int j = 0; j < p; ++j) patterns *= 3;
  for (long code = 1; code < patterns; ++code) {
    long c = code;
    std::vector<int> J;
    std::vector<double> s;
    for (int j = 0; j < p; ++j, c /= 3) {
      const int digit = static_cast<int>(c % 3);
      if (digit == 1) {
        J.push_back(j);
        s.push_back(1.0);
      } else if (digit == 2) {
        J.push_back(j);
        s.push_back(-1.0);
      }
    }
    if (static_cast<Eigen::Index>(J.size()) > D.rows()) continue;
    const auto k = static_cast<Eigen::Index>(J.size());
    Eigen::MatrixXd D_J(D.rows(), k);
    Eigen::VectorXd s_J(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      D_J.col(a) = D.col(J[static_cast<std::size_t>(a)]);
      s_J(a) = s[static_cast<std::size_t>(a)];
    }
    const Eigen::MatrixXd G = D_J.transpose() * D_J;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd alpha_J = lu.solve(D_J.transpose() * x - lambda * s_J);
    bool feasible = true;
    for (Eigen::Index a = 0; a < k; ++a) feasible &= alpha_J(a) * s_J(a) > 0.0;
    if (!feasible) continue;
    const double value =
        0.5 * (x - D_J * alpha_J).squaredNorm() + lambda * alpha_J.lpNorm<1>();
    best = std::min(best, value);
  }
  return best;
}

}  // namespace

TEST_CASE("orthonormal dictionaries reduce to soft thresholding") {
  const Dictionary D = hadamard(8);
  Rng rng(1);
  Eigen::VectorXd x(8);
  for (int i = 0; i < 8; ++i) x(i) = rng.normal();
  const double lambda = 0.3;
  const auto sol = lasso_solve(D.atoms(), x, lambda);
  const Eigen::VectorXd correlations = D.atoms().transpose() * x;
  for (int j = 0; j < 8; ++j) {
    const double expected = detail::soft_threshold(correlations(j), lambda);
    REQUIRE(sol.alpha(j) == Catch::Approx(expected).margin(1e-9));
  }
}

TEST_CASE("large lambda yields the zero solution") {
  const Dictionary D = hadamard_dirac(4);
  Rng rng(2);
  Eigen::VectorXd x(4);
  for (int i = 0; i < 4; ++i) x(i) = rng.normal();
  const double lambda = 1.01 * (D.atoms().transpose() * x).lpNorm<Eigen::Infinity>();
  const auto sol = lasso_solve(D.atoms(), x, lambda);
  REQUIRE(sol.support.empty());
  REQUIRE(sol.alpha.isZero(0.0));
  REQUIRE(sol.objective == Catch::Approx(0.5 * x.squaredNorm()));
}

TEST_CASE("lambda = 0 is rejected") {
  const Dictionary D = hadamard(4);
  REQUIRE_THROWS_AS(lasso_solve(D.atoms(), Eigen::VectorXd::Ones(4), 0.0), invalid_argument);
}

TEST_CASE("objective matches exhaustive sign enumeration (m=6, p=8)") {
  Rng rng(3);
  for (int rep = 0; rep < 25; ++rep) {
    Eigen::MatrixXd A(6, 8);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 8; ++j) A(i, j) = rng.normal();
    const Dictionary D = Dictionary::normalized(A);
    Eigen::VectorXd x(6);
    for (int i = 0; i < 6; ++i) x(i) = rng.normal();
    const double lambda = 0.1;
    const auto sol = lasso_solve(D.atoms(), x, lambda);
    const double oracle = lasso_brute_force(D.atoms(), x, lambda);
    REQUIRE(sol.objective == Catch::Approx(oracle).margin(1e-8));
  }
}

TEST_CASE("KKT certificate holds at every returned solution") {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 6 + static_cast<int>(rng.uniform_below(8));
    const int p = m + static_cast<int>(rng.uniform_below(10));
    Eigen::MatrixXd A(m, p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p; ++j) A(i, j) = rng.normal();
    const Dictionary D = Dictionary::normalized(A);
    Eigen::VectorXd x(m);
    for (int i = 0; i < m; ++i) x(i) = 2.0 * rng.normal();
    const double lambda = std::pow(10.0, rng.uniform(-3.0, 0.0));
    const double tol = 1e-10;
    const auto sol = lasso_solve(D.atoms(), x, lambda, tol);
    const Eigen::VectorXd g = D.atoms().transpose() * (x - D.atoms() * sol.alpha);
    for (int j = 0; j < p; ++j) {
      REQUIRE(std::abs(g(j)) <= lambda + 10 * tol);
      if (sol.sign(j) != 0.0)
        REQUIRE(g(j) == Catch::Approx(lambda * sol.sign(j)).margin(10 * tol));
    }
    REQUIRE(sol.objective ==
            Catch::Approx(lasso_objective(D.atoms(), x, lambda, sol.alpha)).margin(1e-10));
  }
}

TEST_CASE("iteration budget exhaustion raises with the last residual") {
  Rng rng(5);
  Eigen::MatrixXd A(8, 12);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 12; ++j) A(i, j) = rng.normal();
  const Dictionary D = Dictionary::normalized(A);
  Eigen::VectorXd x(8);
  for (int i = 0; i < 8; ++i) x(i) = rng.normal();
  try {
    lasso_solve(D.atoms(), x, 1e-4, 1e-14, 1);
    SUCCEED("converged in a single sweep");
  } catch (const convergence_error& e) {
    REQUIRE(e.kkt_residual() > 0.0);
  }
}
