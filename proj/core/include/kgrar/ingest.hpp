#pragma once

// Building the knowledge graph from a process-supervision dataset.
//
// Dataset lines: {"sample_id", "problem", "steps":[{"text","rating"}], "final_answer"?}
// with ratings in {-1, 0, 1}. Steps rated 1 become procedures, steps rated -1
// become errors, neutral steps are dropped.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgrar/llm.hpp"
#include "kgrar/mkg.hpp"

namespace kgrar::ingest {

struct RatedStep {
  std::string text;
  int rating = 0;

  friend bool operator==(const RatedStep&, const RatedStep&) = default;
};

struct ProcessSample {
  std::string sample_id;
  std::string problem;
  std::vector<RatedStep> steps;
  std::optional<std::string> final_answer;

  friend bool operator==(const ProcessSample&, const ProcessSample&) = default;
};

// A rejected dataset line or sample. `record` holds the original record text
// when it parsed as one.
struct Reject {
  std::size_t line = 0;  // 0 when the reject is not tied to a dataset line
  std::string sample_id;
  std::string reason;
  std::string record;
};

struct ParsedDataset {
  std::vector<ProcessSample> samples;
  std::vector<std::size_t> lines;  // dataset line of each sample
  std::vector<std::string> raw;    // original record text of each sample
  std::vector<Reject> rejects;
};

// Throws IoFailure, or EmptyDataset when the file holds no records at all.
ParsedDataset parse_dataset(const std::filesystem::path& path);
ParsedDataset parse_dataset_text(std::string_view contents);

// Case-folded, whitespace-normalized problem text.
std::string dedupe_key(std::string_view problem);

// Keeps the first sample per dedupe_key.
std::vector<ProcessSample> dedupe(std::vector<ProcessSample> samples);

enum class StepRef { Procedure, Error };

struct KnowledgeAttachment {
  StepRef kind = StepRef::Procedure;
  std::size_t index = 0;

  friend bool operator==(const KnowledgeAttachment&, const KnowledgeAttachment&) = default;
};

struct Decomposition {
  std::string branch;
  std::string subfield;
  std::string problem_type;
  std::vector<std::string> procedures;
  std::vector<std::string> errors;
  std::vector<std::string> knowledge;
  // Parallel to knowledge; nullopt attaches to the first procedure.
  std::vector<std::optional<KnowledgeAttachment>> knowledge_attachment;

  friend bool operator==(const Decomposition&, const Decomposition&) = default;
};

inline constexpr int kDecomposeRetries = 2;
inline constexpr std::string_view kRepairInstruction = "Respond with only the structured object.";

std::vector<llm::ChatMessage> decomposition_messages(const ProcessSample& sample);

// Parses the model's reply against the sample. Procedure and error lists are
// aligned with the sample's +1 and -1 steps; when the model returns a list of
// the wrong length, the rated step texts are used instead. Returns nullopt on
// a malformed reply.
std::optional<Decomposition> parse_decomposition(std::string_view reply, const ProcessSample& sample);

struct DecomposeResult {
  Decomposition decomposition;
  int retry_count = 0;
};

// Throws UnparseableAfterRetries after 1 + kDecomposeRetries failed replies.
// Provider failures propagate.
DecomposeResult decompose(const ProcessSample& sample, llm::LlmClient& llm);

struct InsertResult {
  mkg::NodeId problem_id;
  std::size_t created = 0;
};

InsertResult insert(const Decomposition& decomposition, const ProcessSample& sample, mkg::KnowledgeGraph& graph);

struct BuildConfig {
  std::size_t workers = 1;
};

struct BuildReport {
  std::size_t processed = 0;
  std::size_t rejected = 0;    // decomposition failures
  std::size_t malformed = 0;   // dataset lines that did not parse
  std::size_t duplicates = 0;  // samples dropped by dedupe
  std::size_t nodes = 0;
  std::size_t edges = 0;

  std::string to_json() const;
};

struct BuildResult {
  mkg::KnowledgeGraph graph;
  BuildReport report;
  std::vector<Reject> rejects;  // malformed lines, then failed samples by sample_id
};

// parse -> dedupe -> decompose -> insert. Samples are inserted in dataset
// order whatever the worker count.
BuildResult build_graph(const std::filesystem::path& dataset, llm::LlmClient& llm, const BuildConfig& config = {});

// Rejects as line records: the original fields plus {line, reason}.
std::string rejects_to_lines(const std::vector<Reject>& rejects);

}  // namespace kgrar::ingest
