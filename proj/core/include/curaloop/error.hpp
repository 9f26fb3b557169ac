#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace curaloop {

enum class ErrorCode {
  InvalidArgument,
  AllZero,
  NegativeEntry,
  SpaceMismatch,
  EmptySupport,
  NonPositiveQ,
  NonFiniteReward,
  AlphaOutOfRange,
  UnsupportedNoise,
  SupportOverflow,
  NonPositiveUtility,
  NormalizationDrift,
  TMaxZero,
  SupportViolation,
  AssumptionA1Violated,
  AssumptionA3Violated,
  BracketFailure,
  NotContractive,
  MaxIterations,
  HypothesisViolated,
  DegenerateRound,
  InsufficientData,
  ParseError,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can map it to an exit status without
/// parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  [[nodiscard]] const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace curaloop
