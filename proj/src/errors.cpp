#include "diffprior/errors.hpp"

#include <sstream>

namespace diffprior {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Divergence: return "numerical-divergence";
    case ErrorKind::Convergence: return "convergence-failure";
    case ErrorKind::MissingLabel: return "missing-label";
    case ErrorKind::NoFeasibleSchedule: return "no-feasible-schedule";
    case ErrorKind::DegenerateFilterbank: return "degenerate-filterbank";
    case ErrorKind::ContractViolation: return "contract-violation";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::InvalidArgument: return 3;
    case ErrorKind::Shape: return 4;
    case ErrorKind::Format: return 5;
    case ErrorKind::Io: return 6;
    case ErrorKind::Divergence: return 7;
    case ErrorKind::Convergence: return 8;
    case ErrorKind::MissingLabel: return 9;
    case ErrorKind::NoFeasibleSchedule: return 10;
    case ErrorKind::DegenerateFilterbank: return 11;
    case ErrorKind::ContractViolation: return 12;
    case ErrorKind::Alignment: return 13;
  }
  return 1;
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

DivergenceError::DivergenceError(int step, const std::string& message)
    : Error(ErrorKind::Divergence, message + " (step " + std::to_string(step) + ")"), step_(step) {}

namespace {
std::string convergence_message(double residual, int iterations) {
  std::ostringstream os;
  os << "sinkhorn did not converge after " << iterations << " iterations, residual " << residual;
  return os.str();
}
}  // namespace

ConvergenceError::ConvergenceError(double residual, int iterations)
    : Error(ErrorKind::Convergence, convergence_message(residual, iterations)),
      residual_(residual),
      iterations_(iterations) {}

}  // namespace diffprior
