#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fm {

enum class ErrorCode {
  ZeroNorm,
  DimensionMismatch,
  InvalidTemperature,
  MalformedTemplate,
  TooFewClasses,
  DuplicateClass,
  InvalidConfig,
  UnknownPrompt,
  IoError,
  BadMagic,
  UnsupportedVersion,
  CorruptStore,
  BetaTooLarge,
  BetaTooSmall,
  LabelOutOfRange,
  InconsistentSelection,
  NegativeGamma,
  EmptyClass,
  NonFiniteLoss,
  EmptyClassSet,
  SplitMismatch,
  NegativeInput,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidTemperature: return "InvalidTemperature";
    case ErrorCode::MalformedTemplate: return "MalformedTemplate";
    case ErrorCode::TooFewClasses: return "TooFewClasses";
    case ErrorCode::DuplicateClass: return "DuplicateClass";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownPrompt: return "UnknownPrompt";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::BetaTooLarge: return "BetaTooLarge";
    case ErrorCode::BetaTooSmall: return "BetaTooSmall";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::InconsistentSelection: return "InconsistentSelection";
    case ErrorCode::NegativeGamma: return "NegativeGamma";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyClassSet: return "EmptyClassSet";
    case ErrorCode::SplitMismatch: return "SplitMismatch";
    case ErrorCode::NegativeInput: return "NegativeInput";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// True for codes that describe bad user input rather than a runtime fault.
constexpr bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedTemplate:
    case ErrorCode::TooFewClasses:
    case ErrorCode::DuplicateClass:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidTemperature:
    case ErrorCode::BetaTooLarge:
    case ErrorCode::BetaTooSmall:
    case ErrorCode::LabelOutOfRange:
    case ErrorCode::NegativeGamma:
    case ErrorCode::NegativeInput:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::SplitMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace fm
