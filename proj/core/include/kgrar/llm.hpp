#pragma once

// Chat-completion provider contract with first-token log-probabilities.
//
// Implementations:
//   HttpLlmClient  - chat-completions endpoints (`logprobs`/`top_logprobs`)
//   ScriptedLlm    - deterministic replay of a line-record script
//   CallbackLlm    - wraps a callable, for tests

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgrar/http.hpp"

namespace kgrar::llm {

enum class ChatRole { System, User, Assistant };
std::string_view to_string(ChatRole role) noexcept;

struct ChatMessage {
  ChatRole role = ChatRole::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  bool want_token_logprobs = false;
  std::optional<std::vector<std::string>> constrained_choices;
  std::optional<std::uint64_t> seed;

  // Throws InvalidArgument on a broken invariant.
  void validate() const;
};

using TokenLogprobs = std::map<std::string, double>;

struct CompletionResponse {
  std::string text;
  std::optional<TokenLogprobs> first_token_logprobs;
  std::map<std::string, std::string> provider_meta;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 3;
  int timeout_ms = 60000;
  int backoff_initial_ms = 500;
  int backoff_max_ms = 8000;
};

struct HttpLlmOptions {
  std::string endpoint;  // base URL; "/chat/completions" is appended
  std::string model;
  std::string api_key;
  RetryPolicy retry;
  int top_logprobs = 20;
};

class HttpLlmClient final : public LlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpLlmClient(HttpLlmOptions options, std::shared_ptr<http::Transport> transport = nullptr,
                         Sleeper sleeper = nullptr);

  // Retries transport failures, 429 and 5xx with exponential backoff.
  // provider_meta["attempts"] reports how many posts were made.
  CompletionResponse complete(const CompletionRequest& request) override;

  // Canonical JSON body; byte-stable for a given request.
  static std::string request_body(const HttpLlmOptions& options, const CompletionRequest& request);
  static CompletionResponse parse_response(std::string_view body);  // throws ProviderError

 private:
  HttpLlmOptions options_;
  std::shared_ptr<http::Transport> transport_;
  Sleeper sleeper_;
};

// ---------------------------------------------------------------------------

// One script record: {"matcher": {...}, "response": {...}}.
//
// matcher keys:
//   "nth": k            - the k-th request (0-based) seen by this instance
//   "contains": s|[s..] - every string occurs in the request's message text
//   "seed": n           - request seed must equal n (combines with the above)
// response keys:
//   "text", optional "logprobs" {token: logprob}, optional "error" (an
//   ErrorCode name, raised instead of answering)
//
// "nth" entries take precedence; otherwise the first matching "contains"
// entry in file order answers. Ordered scripts suit a single chain only;
// contains-only scripts may be shared by concurrent chains.
struct ScriptEntry {
  std::optional<std::size_t> nth;
  std::vector<std::string> contains;
  std::optional<std::uint64_t> seed;
  CompletionResponse response;
  std::optional<std::string> error;
};

class ScriptedLlm final : public LlmClient {
 public:
  ScriptedLlm() = default;
  explicit ScriptedLlm(std::vector<ScriptEntry> entries) : entries_(std::move(entries)) {}
  // Not safe against concurrent use of `other`.
  ScriptedLlm(ScriptedLlm&& other) noexcept : entries_(std::move(other.entries_)), log_(std::move(other.log_)) {}

  static ScriptedLlm from_string(std::string_view script);  // throws FormatViolation
  static ScriptedLlm from_file(const std::filesystem::path& path);

  void add(ScriptEntry entry);

  // Throws ScriptExhausted when nothing matches.
  CompletionResponse complete(const CompletionRequest& request) override;

  std::vector<CompletionRequest> requests() const;
  std::size_t request_count() const;

 private:
  mutable std::mutex mutex_;
  std::vector<ScriptEntry> entries_;
  std::vector<CompletionRequest> log_;
};

class CallbackLlm final : public LlmClient {
 public:
  using Fn = std::function<CompletionResponse(const CompletionRequest&)>;
  explicit CallbackLlm(Fn fn) : fn_(std::move(fn)) {}
  CompletionResponse complete(const CompletionRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

// ---------------------------------------------------------------------------

// Log-probability assigned to a choice absent from the reported distribution
// while at least one other choice is present.
inline constexpr double kMissingChoiceFloor = -30.0;

// Folds case/space tokenizer variants (" Yes", "yes") into each canonical
// choice by log-sum-exp; absent choices get kMissingChoiceFloor. Throws
// MissingTokenProbability when no choice is present at all.
std::map<std::string, double> merge_choice_logprobs(const TokenLogprobs& distribution,
                                                    std::span<const std::string> choices);

struct ChoiceQuery {
  std::optional<std::map<std::string, double>> logprobs;  // nullopt: no choice reported
  std::string text;                                        // generated text, for fallbacks
};

// Issues one constrained, logprob-enabled completion.
ChoiceQuery query_choices(LlmClient& llm, std::span<const ChatMessage> messages,
                          std::span<const std::string> choices, std::optional<std::uint64_t> seed = std::nullopt);

// As query_choices, but throws MissingTokenProbability instead of returning
// an empty distribution.
std::map<std::string, double> choice_logprobs(LlmClient& llm, std::span<const ChatMessage> messages,
                                              std::span<const std::string> choices);

// All message contents joined by '\n'; what "contains" matchers search.
std::string flatten_messages(std::span<const ChatMessage> messages);

}  // namespace kgrar::llm
