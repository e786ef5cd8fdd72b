#pragma once

// The retrieve-refine-reason loop, Best-of-N search over independent chains,
// answer voting and benchmark evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgrar/embedding.hpp"
#include "kgrar/llm.hpp"
#include "kgrar/mkg.hpp"
#include "kgrar/prp_rm.hpp"
#include "kgrar/retrieval.hpp"

namespace kgrar::reason {

enum class VotingStrategy { Majority, Last, Min, MinMax, LastMax };

std::string_view to_string(VotingStrategy s) noexcept;
// Case-insensitive; accepts "MinMax" / "min-max" / "min_max" spellings.
std::optional<VotingStrategy> parse_voting(std::string_view s) noexcept;

struct SolveConfig {
  std::size_t n = 8;          // Best-of-N width
  std::size_t max_depth = 8;  // step depth
  std::size_t padding = 4;    // steps generated per retrieve-refine round
  double theta = 0.7;         // end-of-reasoning threshold
  std::size_t k = 3;          // top-k problems carried into step retrieval
  prprm::Role role = prprm::Role::SocraticTeacher;
  VotingStrategy voting = VotingStrategy::Majority;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double temperature = 0.7;   // reasoner sampling temperature

  // Throws ConfigInvalid naming the offending field.
  void validate() const;

  static SolveConfig gsm8k_profile();
};

struct Providers {
  llm::LlmClient& reasoner;
  llm::LlmClient& prprm;  // classification, refinement and scoring
  embedding::EmbeddingProvider& embedder;
  embedding::EmbeddingCache* cache = nullptr;
};

struct StepRecord {
  std::size_t index = 0;  // 1-based
  std::string text;
  // Step-level retrieval performed on this step, feeding the next window.
  bool retrieved = false;
  std::string raw_retrieval;
  std::string refined_retrieval;
  double correctness = 0.0;
  double end_probability = 0.0;
  bool score_fallback = false;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

enum class Termination { EndThreshold, MaxDepth, Failed };
std::string_view to_string(Termination t) noexcept;

struct ReasoningTrace {
  std::size_t chain = 0;
  std::uint64_t seed = 0;
  std::string problem;
  std::string problem_raw_retrieval;
  std::string problem_refined_retrieval;
  std::vector<StepRecord> steps;
  std::string final_answer;
  bool unanswered = false;
  Termination terminated_by = Termination::MaxDepth;
  std::string failure;

  bool failed() const noexcept { return terminated_by == Termination::Failed; }
  std::size_t retrieval_events() const noexcept;
  std::vector<double> correctness() const;

  friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

// Problem-level retrieval shared by every chain of one problem.
retrieval::ProblemRetrieval prepare(std::string_view problem, const mkg::KnowledgeGraph& graph, Providers providers,
                                    const SolveConfig& config);

std::vector<llm::ChatMessage> step_messages(std::string_view problem, std::string_view refined_context,
                                            std::span<const std::string> prior_steps);

// One retry on empty output, then EmptyGeneration.
std::string generate_step(llm::LlmClient& llm, std::string_view problem, std::string_view refined_context,
                          std::span<const std::string> prior_steps, double temperature = 0.0,
                          std::optional<std::uint64_t> seed = std::nullopt);

// One chain. Library errors raised mid-chain end it with a partial trace
// marked Failed rather than propagating.
ReasoningTrace solve_chain(std::string_view problem, const retrieval::ProblemRetrieval& retrieval,
                           const mkg::KnowledgeGraph& graph, Providers providers, const SolveConfig& config,
                           std::size_t chain);

ReasoningTrace solve_one(std::string_view problem, const mkg::KnowledgeGraph& graph, Providers providers,
                         const SolveConfig& config);

struct BestOfN {
  retrieval::ProblemRetrieval retrieval;
  std::vector<ReasoningTrace> traces;   // length n, chain order
  std::optional<std::string> selected;  // nullopt: every chain failed
};

// Never throws AllChainsFailed; `selected` is empty instead.
BestOfN run_best_of_n(std::string_view problem, const mkg::KnowledgeGraph& graph, Providers providers,
                      const SolveConfig& config);

// As run_best_of_n, throwing AllChainsFailed when no chain survives.
BestOfN solve_best_of_n(std::string_view problem, const mkg::KnowledgeGraph& graph, Providers providers,
                        const SolveConfig& config);

// A chain reduced to what voting reads.
struct Ballot {
  std::string answer;
  std::vector<double> scores;  // per-step correctness
};

// Majority: most occurrences. Last / Min: answers weighted by the sum of
// each chain's last / minimum step score. MinMax / LastMax: answer of the
// chain with the highest minimum / last score. Ties go to the earliest
// chain. Throws NoVotableTraces on an empty ballot list.
std::string vote(std::span<const Ballot> ballots, VotingStrategy strategy);
// Failed traces are skipped.
std::string vote(std::span<const ReasoningTrace> traces, VotingStrategy strategy);

struct ExtractedAnswer {
  std::string answer;
  bool unanswered = false;
};

ExtractedAnswer extract_answer(std::span<const std::string> steps);
ExtractedAnswer extract_answer(const ReasoningTrace& trace);

std::string normalize_answer(std::string_view raw);

// Trace files: one header record then one record per step.
std::string trace_to_lines(const ReasoningTrace& trace);
std::vector<ReasoningTrace> traces_from_lines(std::string_view contents);  // throws FormatViolation

// ---------------------------------------------------------------------------
// Evaluation

struct BenchmarkItem {
  std::string id;
  std::string problem;
  std::string answer;
  std::optional<std::string> level;
  std::optional<std::string> subject;
};

// Lines {id, problem, answer, level?, subject?}. Throws IoFailure,
// EmptyDataset, or FormatViolation naming the line.
std::vector<BenchmarkItem> parse_benchmark(const std::filesystem::path& path);
std::vector<BenchmarkItem> parse_benchmark_text(std::string_view contents);

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const noexcept { return total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

// 100 * correct / total rounded half-up to one decimal, e.g. "75.0".
std::string format_accuracy(std::size_t correct, std::size_t total);

struct ItemResult {
  std::string id;
  std::optional<std::string> level;
  std::string gold;      // normalized
  std::string selected;  // configured strategy; empty when every chain failed
  std::string majority;
  std::string last;
  bool correct = false;
  bool correct_majority = false;
  bool correct_last = false;
  bool all_failed = false;
  std::vector<ReasoningTrace> traces;
};

struct LevelRow {
  Tally selected;
  Tally majority;
  Tally last;
};

struct EvalReport {
  VotingStrategy strategy = VotingStrategy::Majority;
  std::vector<ItemResult> items;  // dataset order
  LevelRow overall;
  std::map<std::string, LevelRow> levels;  // empty when no item carries a level

  std::string to_json() const;
  // Levels as columns with Maj and Last under each, then Overall.
  std::string render_table(std::string_view method = "Step-by-Step KG-RAR") const;
};

// When trace_dir is set, writes <trace_dir>/<item id>.jsonl per item.
EvalReport evaluate(std::span<const BenchmarkItem> items, const mkg::KnowledgeGraph& graph, Providers providers,
                    const SolveConfig& config, const std::optional<std::filesystem::path>& trace_dir = std::nullopt);

EvalReport evaluate(const std::filesystem::path& dataset, const mkg::KnowledgeGraph& graph, Providers providers,
                    const SolveConfig& config, const std::optional<std::filesystem::path>& trace_dir = std::nullopt);

}  // namespace kgrar::reason
