#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace noisymem {

enum class ErrorKind {
  NonCommensurate,
  OffGrid,
  GridMismatch,
  NonFiniteState,
  KernelNotReducible,
  FixedPointDiverged,
  MalliavinUnavailable,
  RankDeficientBasis,
  NonMonotone,
  OutOfControlSet,
  InvalidArgument,
  Config,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonCommensurate: return "NonCommensurate";
    case ErrorKind::OffGrid: return "OffGrid";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::KernelNotReducible: return "KernelNotReducible";
    case ErrorKind::FixedPointDiverged: return "FixedPointDiverged";
    case ErrorKind::MalliavinUnavailable: return "MalliavinUnavailable";
    case ErrorKind::RankDeficientBasis: return "RankDeficientBasis";
    case ErrorKind::NonMonotone: return "NonMonotone";
    case ErrorKind::OutOfControlSet: return "OutOfControlSet";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI) can surface it by name.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace noisymem
