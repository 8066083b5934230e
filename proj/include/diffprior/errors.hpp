#pragma once

#include <stdexcept>
#include <string>

namespace diffprior {

enum class ErrorKind {
  InvalidArgument,
  Shape,
  Format,
  Io,
  Divergence,
  Convergence,
  MissingLabel,
  NoFeasibleSchedule,
  DegenerateFilterbank,
  ContractViolation,
  Alignment,
  Config,
};

const char* to_string(ErrorKind kind);

/// Process exit code used by the command-line tool for each error kind.
/// Codes are distinct and stable; 0 means success and 1 a usage error.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Non-finite value met while running the diffusion chain or optimizer.
/// `step()` is the diffusion step (or optimizer step) that produced it.
class DivergenceError : public Error {
 public:
  DivergenceError(int step, const std::string& message);
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(double residual, int iterations);
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace diffprior
