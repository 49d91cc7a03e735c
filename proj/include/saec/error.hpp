#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace saec {

enum class ErrorCode {
  FileNotFound,
  UnsupportedFormat,
  CorruptImage,
  InvalidDimension,
  DimensionMismatch,
  InvalidArgument,
  EmptyInput,
  ShapeMismatch,
  LengthMismatch,
  NonFiniteLogit,
  EmptySet,
  InsufficientData,
  DegenerateLabels,
  MissingConfidence,
  NegativeTime,
  NoCorrectDecisions,
  MissingClassDir,
  EmptyDataset,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptImage: return "CorruptImage";
    case ErrorCode::InvalidDimension: return "InvalidDimension";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFiniteLogit: return "NonFiniteLogit";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::MissingConfidence: return "MissingConfidence";
    case ErrorCode::NegativeTime: return "NegativeTime";
    case ErrorCode::NoCorrectDecisions: return "NoCorrectDecisions";
    case ErrorCode::MissingClassDir: return "MissingClassDir";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace saec
