#include "kgrar/error.hpp"

namespace kgrar {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::IllegalEndpoints: return "IllegalEndpoints";
    case ErrorCode::WrongKind: return "WrongKind";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::FormatViolation: return "FormatViolation";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::LlmUnavailable: return "LlmUnavailable";
    case ErrorCode::UnparseableAfterRetries: return "UnparseableAfterRetries";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonFiniteEmbedding: return "NonFiniteEmbedding";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::NoProblems: return "NoProblems";
    case ErrorCode::EmptyStepSpace: return "EmptyStepSpace";
    case ErrorCode::MissingTokenProbability: return "MissingTokenProbability";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::AllChainsFailed: return "AllChainsFailed";
    case ErrorCode::NoVotableTraces: return "NoVotableTraces";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::ConfigInvalid); ++i) {
    auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace kgrar
