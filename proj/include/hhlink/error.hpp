#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hhlink {

enum class ErrorCode {
  EmptyField,
  LengthMismatch,
  BothEmpty,
  UnknownProfile,
  Degenerate,
  MMismatch,
  NoConvergence,
  Untrained,
  UnknownEndpoint,
  NoOverlap,
  BadDist,
  PatternInfeasible,
  Empty,
  TooSmall,
  Schema,
  Parse,
  DuplicateId,
  Exhausted,
  UnknownTask,
  InvalidIds,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyField: return "E_EMPTY_FIELD";
    case ErrorCode::LengthMismatch: return "E_LENGTH_MISMATCH";
    case ErrorCode::BothEmpty: return "E_BOTH_EMPTY";
    case ErrorCode::UnknownProfile: return "E_UNKNOWN_PROFILE";
    case ErrorCode::Degenerate: return "E_DEGENERATE";
    case ErrorCode::MMismatch: return "E_M_MISMATCH";
    case ErrorCode::NoConvergence: return "E_NO_CONVERGENCE";
    case ErrorCode::Untrained: return "E_UNTRAINED";
    case ErrorCode::UnknownEndpoint: return "E_UNKNOWN_ENDPOINT";
    case ErrorCode::NoOverlap: return "E_NO_OVERLAP";
    case ErrorCode::BadDist: return "E_BAD_DIST";
    case ErrorCode::PatternInfeasible: return "E_PATTERN_INFEASIBLE";
    case ErrorCode::Empty: return "E_EMPTY";
    case ErrorCode::TooSmall: return "E_TOO_SMALL";
    case ErrorCode::Schema: return "E_SCHEMA";
    case ErrorCode::Parse: return "E_PARSE";
    case ErrorCode::DuplicateId: return "E_DUPLICATE_ID";
    case ErrorCode::Exhausted: return "E_EXHAUSTED";
    case ErrorCode::UnknownTask: return "E_UNKNOWN_TASK";
    case ErrorCode::InvalidIds: return "E_INVALID_IDS";
    case ErrorCode::InvalidArgument: return "E_INVALID_ARGUMENT";
    case ErrorCode::Io: return "E_IO";
  }
  return "E_UNKNOWN";
}

/// Exception carrying one of the pipeline's error codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hhlink
