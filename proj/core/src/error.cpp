#include "qswitch/error.hpp"

namespace qswitch {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NotUnitary: return "NotUnitary";
    case ErrorCode::InvalidProblem: return "InvalidProblem";
    case ErrorCode::TargetNotUnitary: return "TargetNotUnitary";
    case ErrorCode::BadEdge: return "BadEdge";
    case ErrorCode::ZeroTraceOverlap: return "ZeroTraceOverlap";
    case ErrorCode::UnsupportedFeasibleSet: return "UnsupportedFeasibleSet";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

bool Error::is_config_error() const noexcept {
  switch (code_) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::Io:
    case ErrorCode::Config:
    case ErrorCode::BadEdge:
    case ErrorCode::TargetNotUnitary:
    case ErrorCode::UnsupportedFeasibleSet:
      return true;
    default:
      return false;
  }
}

}  // namespace qswitch
