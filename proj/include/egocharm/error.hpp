#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace egocharm {

enum class ErrorCode {
  InvalidArgument,
  EmptyRecording,
  NonMonotonicTimestamps,
  NonDivisibleWindow,
  ShapeMismatch,
  GraphNotRecorded,
  FormatVersionMismatch,
  CorruptCheckpoint,
  DivergenceDetected,
  InfeasibleSplit,
  EmptyEvaluation,
  DegenerateData,
  ParseError,
  UnknownLabel,
  SpecParseError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyRecording: return "EmptyRecording";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::NonDivisibleWindow: return "NonDivisibleWindow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::GraphNotRecorded: return "GraphNotRecorded";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::InfeasibleSplit: return "InfeasibleSplit";
    case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::SpecParseError: return "SpecParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace egocharm
