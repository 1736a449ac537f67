#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fpam {

enum class ErrorKind {
  InvalidArgument,
  NonConvergent,      // adaptive quadrature missed its tolerance
  DivergentDiagonal,  // self-Hamiltonian requested outside the Full regime
  GridMismatch,
  NotIntegrable,
  IllConditioned,
  AsymmetricInput,
  NotConverged,       // eigensolver ran out of iterations
  NotNormalized,
  Diverged,           // variational estimate above the configured ceiling
  ConfigInvalid,
  RegimeMismatch,
  MissingRecords,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

// Process exit code for the CLI: 2 for configuration problems, 1 for numerical failures.
int exit_code_for(ErrorKind kind);

}  // namespace fpam
