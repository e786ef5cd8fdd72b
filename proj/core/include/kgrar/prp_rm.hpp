#pragma once

// Post-retrieval processing and reward model.
//
// A frozen chat model plays a teacher role: it rewrites raw graph retrievals
// into targeted guidance (refine) and judges steps through the first-token
// probabilities of "Yes" and "No" (score_step, end_detect).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgrar/llm.hpp"
#include "kgrar/mkg.hpp"

namespace kgrar::prprm {

enum class Role { ResponsibleTeacher, SocraticTeacher, CriticalTeacher };

std::string_view to_string(Role role) noexcept;
// Accepts "ResponsibleTeacher" or the short forms "responsible", "socratic", "critical".
std::optional<Role> parse_role(std::string_view s) noexcept;

// Versioned system prompt for the role.
std::string_view role_prompt(Role role);

// One refinement round: the item (problem or step), what the graph returned
// for it, and the rewritten guidance.
struct HistoryEntry {
  std::string item_text;
  std::string raw_retrieval;
  std::string refined_retrieval;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct StepScores {
  double correctness = 0.0;
  double end_probability = 0.0;
};

// Root text under a kind-specific header, then procedures in NextProcedure
// order, errors, knowledge and related problems, each under its own header.
std::string render_retrieval(const mkg::Subgraph& subgraph);

std::string flatten_history(std::span<const HistoryEntry> history);

struct Refinement {
  std::string text;
  bool passthrough = false;  // model returned nothing twice; text is the raw retrieval
};

std::vector<llm::ChatMessage> refine_messages(std::span<const HistoryEntry> history, std::string_view item_text,
                                              std::string_view raw_retrieval, Role role);

Refinement refine(std::span<const HistoryEntry> history, std::string_view item_text, std::string_view raw_retrieval,
                  Role role, llm::LlmClient& llm, std::optional<std::uint64_t> seed = std::nullopt);

inline constexpr std::string_view kCorrectnessInstruction = "Is this step correct (Yes/No)?";
inline constexpr std::string_view kEndInstruction = "Has a final answer been reached (Yes/No)?";

// exp(yes) / (exp(yes) + exp(no)), evaluated after subtracting the max.
double yes_no_probability(double logprob_yes, double logprob_no);

// What the scorer sees: refinement history plus every step so far; the last
// step is the one under review.
struct ScoringContext {
  std::span<const HistoryEntry> history;
  std::span<const std::string> steps;
  Role role = Role::SocraticTeacher;
  std::optional<std::uint64_t> seed;
};

struct ScoreResult {
  double score = 0.5;
  bool text_fallback = false;  // no token probabilities; score read off the generated word
};

inline constexpr double kFallbackYes = 0.99;
inline constexpr double kFallbackNo = 0.01;

std::vector<llm::ChatMessage> scoring_messages(const ScoringContext& context, std::string_view instruction);

// Falls back to a second constrained query, then to the first generated word.
// Throws MissingTokenProbability when all of that yields nothing.
ScoreResult yes_no_score(llm::LlmClient& llm, const ScoringContext& context, std::string_view instruction);

ScoreResult score_step(llm::LlmClient& llm, const ScoringContext& context);
ScoreResult end_detect(llm::LlmClient& llm, const ScoringContext& context);

}  // namespace kgrar::prprm
