#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomo {

/// Input that violates a documented precondition (shape, range, file layout).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NegativeEntry : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingTotals : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Raised by check_unimodular when the number of maximal minors exceeds the cap.
class EnumerationTooLarge : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class Infeasible : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, double violation)
      : NumericalError(what), violation_(violation) {}
  double violation() const noexcept { return violation_; }

 private:
  double violation_;
};

class NonFiniteLikelihood : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class OptFailed : public NumericalError {
 public:
  OptFailed(const std::string& what, std::vector<double> best_params)
      : NumericalError(what), best_(std::move(best_params)) {}
  const std::vector<double>& best_params() const noexcept { return best_; }

 private:
  std::vector<double> best_;
};

class DegenerateEnsemble : public NumericalError {
 public:
  DegenerateEnsemble(const std::string& what, std::size_t epoch)
      : NumericalError(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace tomo
