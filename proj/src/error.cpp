#include "fpam/error.hpp"

namespace fpam {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonConvergent: return "NonConvergent";
    case ErrorKind::DivergentDiagonal: return "DivergentDiagonal";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::NotIntegrable: return "NotIntegrable";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::AsymmetricInput: return "AsymmetricInput";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::NotNormalized: return "NotNormalized";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::RegimeMismatch: return "RegimeMismatch";
    case ErrorKind::MissingRecords: return "MissingRecords";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::RegimeMismatch:
    case ErrorKind::InvalidArgument:
      return 2;
    default:
      return 1;
  }
}

}  // namespace fpam
