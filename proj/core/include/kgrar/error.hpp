#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kgrar {

enum class ErrorCode {
  EmptyText,
  UnknownNode,
  IllegalEndpoints,
  WrongKind,
  IoFailure,
  FormatViolation,
  EmptyDataset,
  LlmUnavailable,
  UnparseableAfterRetries,
  DimensionMismatch,
  ZeroVector,
  NonFiniteEmbedding,
  ProviderError,
  NoProblems,
  EmptyStepSpace,
  MissingTokenProbability,
  EmptyGeneration,
  AllChainsFailed,
  NoVotableTraces,
  Timeout,
  TransportError,
  RateLimited,
  ScriptExhausted,
  InvalidArgument,
  ConfigInvalid,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept;

// Every failure surfaced by the library is an Error carrying a stable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Transport-level failures of a model or embedding endpoint.
inline bool is_provider_failure(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::LlmUnavailable:
    case ErrorCode::ProviderError:
    case ErrorCode::Timeout:
    case ErrorCode::TransportError:
    case ErrorCode::RateLimited:
    case ErrorCode::ScriptExhausted:
      return true;
    default:
      return false;
  }
}

}  // namespace kgrar
