#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mppde {

enum class ErrorCode {
  GridTooSmall,
  SolutionBlowup,
  StepLimitExceeded,
  ShapeMismatch,
  IndexOutOfBounds,
  NotScalar,
  InsufficientHorizon,
  MissingCheckpoint,
  InvalidArgument,
  FormatError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::GridTooSmall: return "GridTooSmall";
    case ErrorCode::SolutionBlowup: return "SolutionBlowup";
    case ErrorCode::StepLimitExceeded: return "StepLimitExceeded";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IndexOutOfBounds: return "IndexOutOfBounds";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::InsufficientHorizon: return "InsufficientHorizon";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace mppde
