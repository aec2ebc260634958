#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace texsynth {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  TooManyScales,
  MalformedFile,
  ChecksumMismatch,
  UnknownLayer,
  NonFiniteObjective,
  DegenerateSample,
  DisconnectedGraph,
  SeparationDivergence,
  IoFailure,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooManyScales: return "TooManyScales";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::SeparationDivergence: return "SeparationDivergence";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Errors caused by the caller's input rather than by a failing computation.
  bool is_input_error() const noexcept {
    return code_ != ErrorCode::NonFiniteObjective && code_ != ErrorCode::IoFailure;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace texsynth
