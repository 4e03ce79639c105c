#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace weedid {

enum class ErrorCode {
  InsufficientExamples,
  UnknownClass,
  EmptyInput,
  ShapeMismatch,
  StaleCache,
  ClassCountMismatch,
  UnknownSubsetClass,
  MissingMapping,
  EmptySet,
  EmptyCalibration,
  LengthMismatch,
  IdOutOfRange,
  EmptyMatrix,
  MalformedIndex,
  MalformedFile,
  ConfigError,
  MissingFile,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (CLI exit codes, HTTP status mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientExamples: return "InsufficientExamples";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::ClassCountMismatch: return "ClassCountMismatch";
    case ErrorCode::UnknownSubsetClass: return "UnknownSubsetClass";
    case ErrorCode::MissingMapping: return "MissingMapping";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyCalibration: return "EmptyCalibration";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::MalformedIndex: return "MalformedIndex";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace weedid
