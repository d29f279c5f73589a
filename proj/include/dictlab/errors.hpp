#pragma once

#include <stdexcept>
#include <string>

namespace dictlab {

/// Thrown on malformed inputs (bad dimensions, invalid parameter ranges).
class invalid_argument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a restricted Gram matrix D_J^T D_J is (numerically) singular.
/// `signal_index` is >= 0 when the failure happened inside a batch aggregate.
class singular_support_error : public std::runtime_error {
 public:
  explicit singular_support_error(const std::string& what, long signal_index = -1)
      : std::runtime_error(what), signal_index_(signal_index) {}
  long signal_index() const noexcept { return signal_index_; }

 private:
  long signal_index_;
};

/// Thrown when a theorem-side precondition fails; `what()` names the inequality.
class condition_violated_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an iterative solver exhausts its iteration budget.
class convergence_error : public std::runtime_error {
 public:
  convergence_error(const std::string& what, double kkt_residual)
      : std::runtime_error(what), kkt_residual_(kkt_residual) {}
  double kkt_residual() const noexcept { return kkt_residual_; }

 private:
  double kkt_residual_;
};

/// Thrown when an exact combinatorial computation would exceed its budget.
/// Carries the coherence-based fallback bound delta_k <= k * mu0.
class combinatorial_guard_error : public std::runtime_error {
 public:
  combinatorial_guard_error(const std::string& what, double coherence_bound)
      : std::runtime_error(what), coherence_bound_(coherence_bound) {}
  double coherence_bound() const noexcept { return coherence_bound_; }

 private:
  double coherence_bound_;
};

/// Thrown when regularization tuning cannot reach the target sparsity.
class tuning_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dictlab
