#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oumwoz {

enum class ErrorCode {
  MalformedInput,
  DuplicateId,
  IoError,
  SchemaVersionMismatch,
  EmptyBase,
  NoCandidates,
  WrongPhase,
  AlternationViolation,
  TooEarly,
  ValidationError,
  UnknownSession,
  Unauthorized,
  ZeroVariance,
  ConstantInput,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::EmptyBase: return "EmptyBase";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::WrongPhase: return "WrongPhase";
    case ErrorCode::AlternationViolation: return "AlternationViolation";
    case ErrorCode::TooEarly: return "TooEarly";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Thrown by close_session when the minimum duration has not elapsed.
class TooEarlyError : public Error {
 public:
  explicit TooEarlyError(long long remaining_seconds)
      : Error(ErrorCode::TooEarly, std::to_string(remaining_seconds) + " seconds remaining"),
        remaining_(remaining_seconds) {}

  long long remaining_seconds() const noexcept { return remaining_; }

 private:
  long long remaining_;
};

}  // namespace oumwoz
