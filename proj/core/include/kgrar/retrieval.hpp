#pragma once

// Problem retrieval (taxonomy filter, then cosine ranking, then DFS context)
// and step retrieval (cosine ranking over the steps of the top-k problems,
// then BFS context).

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgrar/embedding.hpp"
#include "kgrar/llm.hpp"
#include "kgrar/mkg.hpp"

namespace kgrar::retrieval {

inline constexpr std::size_t kDefaultTopK = 3;
inline constexpr std::string_view kUnknownLabel = "unknown";

struct QueryClassification {
  std::string branch;
  std::string subfield;
  std::string problem_type;

  friend bool operator==(const QueryClassification&, const QueryClassification&) = default;
};

enum class FilterLevel { Type, Subfield, Branch, All };
std::string_view to_string(FilterLevel level) noexcept;

struct CandidateSet {
  FilterLevel level = FilterLevel::All;
  std::vector<mkg::NodeId> problem_ids;  // ascending
};

struct ProblemMatch {
  mkg::NodeId problem_id;
  double similarity = 0.0;
  mkg::Subgraph context;  // dfs_context(problem_id)
  std::vector<mkg::NodeId> procedures;
  std::vector<mkg::NodeId> errors;
  std::vector<mkg::NodeId> knowledge;
};

struct StepMatch {
  mkg::NodeId step_id;
  double similarity = 0.0;
  mkg::Subgraph context;  // bfs_context(step_id)
  // The top problems held no steps; step_id and context are the top
  // problem's instead.
  bool empty_step_space = false;
};

struct ProblemRetrieval {
  QueryClassification classification;
  CandidateSet candidates;
  std::vector<ProblemMatch> matches;  // descending similarity, ties by ascending id
};

// Prompt carrying the question and the graph's taxonomy vocabulary.
std::vector<llm::ChatMessage> classification_messages(std::string_view question, const mkg::KnowledgeGraph& graph);

// Accepts "Branch: ..\nSubfield: ..\nProblem type: .." lines, a single
// "A / B / C" line, or a JSON object with branch/subfield/problem_type.
std::optional<QueryClassification> parse_classification(std::string_view response);

// One retry on an unparseable reply, then all three fields fall back to "unknown".
QueryClassification classify_query(std::string_view question, llm::LlmClient& llm, const mkg::KnowledgeGraph& graph);

// Type, then Subfield, then Branch, then every problem. Throws NoProblems.
CandidateSet filter_candidates(const mkg::KnowledgeGraph& graph, const QueryClassification& classification);

// Called for every node read while building and scoring a search space.
using NodeObserver = std::function<void(mkg::NodeId)>;

struct RankOptions {
  std::size_t k = kDefaultTopK;
  std::size_t dfs_depth = mkg::kDefaultDfsDepth;
  std::size_t bfs_depth = mkg::kDefaultBfsDepth;
  NodeObserver observer;
};

// Cosine ranking of a candidate set against the question.
std::vector<ProblemMatch> rank_problems(std::string_view question, const mkg::KnowledgeGraph& graph,
                                        const CandidateSet& candidates, embedding::EmbeddingProvider& provider,
                                        embedding::EmbeddingCache* cache, const RankOptions& options = {});

ProblemRetrieval retrieve_problem(std::string_view question, const mkg::KnowledgeGraph& graph,
                                  embedding::EmbeddingProvider& provider, embedding::EmbeddingCache* cache,
                                  llm::LlmClient& llm, const RankOptions& options = {});

// Procedure and Error nodes reachable over out-edges from the given problems,
// ascending id.
std::vector<mkg::NodeId> step_space(const mkg::KnowledgeGraph& graph, std::span<const mkg::NodeId> problems,
                                    const NodeObserver& observer = {});

// Throws InvalidArgument when top_problems is empty.
StepMatch retrieve_step(std::string_view step_text, std::span<const ProblemMatch> top_problems,
                        const mkg::KnowledgeGraph& graph, embedding::EmbeddingProvider& provider,
                        embedding::EmbeddingCache* cache, const RankOptions& options = {});

}  // namespace kgrar::retrieval
