#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mixinv {

/// Base class for numerical failures (exit code 4 at the command line).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The regularizer failed its invertibility certificate.
class SingularRegularizerError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// An iterative solve stopped before reaching the requested tolerance.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(int iterations, double residual)
      : NumericalError("iterative solver did not converge after " + std::to_string(iterations) +
                       " iterations (relative residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// The data vector is identically zero; the noise-level maximization is undefined.
class ZeroDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The source plane reaches the measurement surface.
class GeometryError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Discrepancy target cannot be met on the requested bracket.
class NoRootError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Raised when a dense oracle is asked to run above its size guard.
class DimensionError : public std::length_error {
 public:
  using std::length_error::length_error;
};

}  // namespace mixinv
