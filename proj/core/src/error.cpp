#include "curaloop/error.hpp"

namespace curaloop {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::SpaceMismatch: return "SpaceMismatch";
    case ErrorCode::EmptySupport: return "EmptySupport";
    case ErrorCode::NonPositiveQ: return "NonPositiveQ";
    case ErrorCode::NonFiniteReward: return "NonFiniteReward";
    case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::UnsupportedNoise: return "UnsupportedNoise";
    case ErrorCode::SupportOverflow: return "SupportOverflow";
    case ErrorCode::NonPositiveUtility: return "NonPositiveUtility";
    case ErrorCode::NormalizationDrift: return "NormalizationDrift";
    case ErrorCode::TMaxZero: return "TMaxZero";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::AssumptionA1Violated: return "AssumptionA1Violated";
    case ErrorCode::AssumptionA3Violated: return "AssumptionA3Violated";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::NotContractive: return "NotContractive";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::HypothesisViolated: return "HypothesisViolated";
    case ErrorCode::DegenerateRound: return "DegenerateRound";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace curaloop
