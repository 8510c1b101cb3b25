#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qswitch {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NotHermitian,
  NoConvergence,
  NotUnitary,
  InvalidProblem,
  TargetNotUnitary,
  BadEdge,
  ZeroTraceOverlap,
  UnsupportedFeasibleSet,
  Io,
  Config,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code so the
// CLI can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

  // Configuration and file problems, as opposed to numerical failures.
  bool is_config_error() const noexcept;

 private:
  ErrorCode code_;
};

}  // namespace qswitch
