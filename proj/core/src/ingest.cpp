#include "kgrar/ingest.hpp"

#include <algorithm>
#include <exception>
#include <unordered_set>

#include <json.hpp>

#include "kgrar/error.hpp"
#include "kgrar/io.hpp"
#include "kgrar/prompts.hpp"
#include "kgrar/text.hpp"
#include "parallel.hpp"

namespace kgrar::ingest {

using mkg::EdgeLabel;
using mkg::NodeId;
using mkg::NodeKind;

// ---------------------------------------------------------------------------
// Dataset parsing

namespace {

std::optional<std::string> id_string(const nlohmann::json& v) {
  if (v.is_string() && !text::is_blank(v.get<std::string>())) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  return std::nullopt;
}

// Returns the reason the record is invalid, or fills `out`.
std::optional<std::string> read_sample(const nlohmann::json& j, ProcessSample& out) {
  if (!j.is_object()) return "record is not an object";
  if (!j.contains("sample_id")) return "missing field 'sample_id'";
  auto id = id_string(j["sample_id"]);
  if (!id) return "sample_id must be a non-empty string or integer";
  out.sample_id = *id;
  if (!j.contains("problem")) return "missing field 'problem'";
  if (!j["problem"].is_string() || text::is_blank(j["problem"].get<std::string>())) return "problem must be a non-empty string";
  out.problem = j["problem"].get<std::string>();
  if (!j.contains("steps")) return "missing field 'steps'";
  if (!j["steps"].is_array() || j["steps"].empty()) return "steps must be a non-empty list";
  for (const auto& s : j["steps"]) {
    if (!s.is_object() || !s.contains("text") || !s["text"].is_string()) return "step without text";
    if (!s.contains("rating") || !s["rating"].is_number_integer()) return "step without integer rating";
    auto r = s["rating"].get<long long>();
    if (r < -1 || r > 1) return "rating outside {-1, 0, 1}";
    out.steps.push_back(RatedStep{s["text"].get<std::string>(), static_cast<int>(r)});
  }
  if (j.contains("final_answer") && !j["final_answer"].is_null()) {
    if (!j["final_answer"].is_string()) return "final_answer must be a string";
    out.final_answer = j["final_answer"].get<std::string>();
  }
  return std::nullopt;
}

}  // namespace

ParsedDataset parse_dataset_text(std::string_view contents) {
  ParsedDataset out;
  bool any = false;
  auto lines = io::split_lines(contents);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    any = true;
    auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) {
      out.rejects.push_back(Reject{i + 1, "", "not a structured record", std::string(lines[i])});
      continue;
    }
    ProcessSample s;
    if (auto reason = read_sample(j, s)) {
      std::string sid = j.is_object() && j.contains("sample_id") ? id_string(j["sample_id"]).value_or("") : "";
      out.rejects.push_back(Reject{i + 1, sid, *reason, std::string(lines[i])});
      continue;
    }
    out.samples.push_back(std::move(s));
    out.lines.push_back(i + 1);
    out.raw.emplace_back(lines[i]);
  }
  if (!any) throw Error(ErrorCode::EmptyDataset, "dataset has no records");
  return out;
}

ParsedDataset parse_dataset(const std::filesystem::path& path) { return parse_dataset_text(io::read_file(path)); }

std::string dedupe_key(std::string_view problem) { return text::casefold(text::normalize_whitespace(problem)); }

namespace {

std::vector<std::size_t> first_occurrences(const std::vector<ProcessSample>& samples) {
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (seen.insert(dedupe_key(samples[i].problem)).second) keep.push_back(i);
  return keep;
}

}  // namespace

std::vector<ProcessSample> dedupe(std::vector<ProcessSample> samples) {
  std::vector<ProcessSample> out;
  for (std::size_t i : first_occurrences(samples)) out.push_back(std::move(samples[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Decomposition

std::vector<llm::ChatMessage> decomposition_messages(const ProcessSample& sample) {
  std::string user = "Problem:\n" + text::trim(sample.problem) + "\n\nSteps:";
  for (std::size_t i = 0; i < sample.steps.size(); ++i) {
    user += "\n" + std::to_string(i + 1) + ". [rating " + std::to_string(sample.steps[i].rating) + "] " +
            text::trim(sample.steps[i].text);
  }
  if (sample.final_answer) user += "\n\nFinal answer: " + text::trim(*sample.final_answer);
  return {{llm::ChatRole::System, std::string(prompts::resource("decompose"))}, {llm::ChatRole::User, std::move(user)}};
}

namespace {

std::optional<std::vector<std::string>> string_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::vector<std::string>{};
  if (!j[key].is_array()) return std::nullopt;
  std::vector<std::string> out;
  for (const auto& v : j[key]) {
    if (!v.is_string()) return std::nullopt;
    out.push_back(text::trim(v.get<std::string>()));
  }
  return out;
}

std::optional<KnowledgeAttachment> parse_attachment(const nlohmann::json& v) {
  if (!v.is_string()) return std::nullopt;
  std::string s = text::casefold(text::trim(v.get<std::string>()));
  auto colon = s.find(':');
  if (colon == std::string::npos) return std::nullopt;
  std::string kind = s.substr(0, colon);
  std::string index = text::trim(std::string_view(s).substr(colon + 1));
  if (index.empty() || !std::all_of(index.begin(), index.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  if (index.size() > 9) return std::nullopt;
  std::size_t i = std::stoul(index);
  if (kind == "procedure") return KnowledgeAttachment{StepRef::Procedure, i};
  if (kind == "error") return KnowledgeAttachment{StepRef::Error, i};
  return std::nullopt;
}

std::vector<std::string> align(std::vector<std::string> proposed, const std::vector<std::string>& rated) {
  if (proposed.size() != rated.size()) return rated;
  for (std::size_t i = 0; i < proposed.size(); ++i)
    if (proposed[i].empty()) proposed[i] = rated[i];
  return proposed;
}

}  // namespace

std::optional<Decomposition> parse_decomposition(std::string_view reply, const ProcessSample& sample) {
  auto open = reply.find('{');
  auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  auto j = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;

  Decomposition d;
  for (auto [key, field] : {std::pair{"branch", &d.branch}, std::pair{"subfield", &d.subfield},
                            std::pair{"problem_type", &d.problem_type}}) {
    if (!j.contains(key) || !j[key].is_string()) return std::nullopt;
    *field = text::normalize_whitespace(j[key].get<std::string>());
    if (field->empty()) return std::nullopt;
  }
  auto procedures = string_list(j, "procedures");
  auto errors = string_list(j, "errors");
  auto knowledge = string_list(j, "knowledge");
  if (!procedures || !errors || !knowledge) return std::nullopt;

  std::vector<std::string> good;
  std::vector<std::string> bad;
  for (const auto& s : sample.steps) {
    if (s.rating > 0) good.push_back(text::trim(s.text));
    if (s.rating < 0) bad.push_back(text::trim(s.text));
  }
  d.procedures = align(std::move(*procedures), good);
  d.errors = align(std::move(*errors), bad);

  std::vector<std::optional<KnowledgeAttachment>> attach;
  if (j.contains("knowledge_attachment") && j["knowledge_attachment"].is_array())
    for (const auto& v : j["knowledge_attachment"]) attach.push_back(parse_attachment(v));
  for (std::size_t i = 0; i < knowledge->size(); ++i) {
    if ((*knowledge)[i].empty()) continue;
    d.knowledge.push_back((*knowledge)[i]);
    d.knowledge_attachment.push_back(i < attach.size() ? attach[i] : std::nullopt);
  }
  return d;
}

DecomposeResult decompose(const ProcessSample& sample, llm::LlmClient& llm) {
  llm::CompletionRequest req;
  req.messages = decomposition_messages(sample);
  req.temperature = 0.0;
  req.max_tokens = 2048;
  for (int attempt = 0; attempt <= kDecomposeRetries; ++attempt) {
    auto resp = llm.complete(req);
    if (auto d = parse_decomposition(resp.text, sample)) return DecomposeResult{std::move(*d), attempt};
    req.messages.push_back({llm::ChatRole::Assistant, resp.text});
    req.messages.push_back({llm::ChatRole::User, std::string(kRepairInstruction)});
  }
  throw Error(ErrorCode::UnparseableAfterRetries, "sample " + sample.sample_id + ": no structured object after " +
                                                      std::to_string(kDecomposeRetries) + " retries");
}

// ---------------------------------------------------------------------------
// Insertion

InsertResult insert(const Decomposition& d, const ProcessSample& sample, mkg::KnowledgeGraph& graph) {
  const std::size_t before = graph.node_count();

  NodeId branch = graph.add_node(NodeKind::Branch, d.branch);
  NodeId subfield = graph.add_node(NodeKind::Subfield, d.subfield);
  NodeId type = graph.add_node(NodeKind::ProblemType, d.problem_type);
  graph.add_edge(branch, subfield, EdgeLabel::HasSubfield);
  graph.add_edge(subfield, type, EdgeLabel::HasType);

  mkg::Attrs problem_attrs{{"sample_id", sample.sample_id}};
  if (sample.final_answer) problem_attrs.emplace("final_answer", *sample.final_answer);
  NodeId problem = graph.add_node(NodeKind::Problem, sample.problem, std::move(problem_attrs));
  graph.add_edge(type, problem, EdgeLabel::HasProblem);

  std::vector<NodeId> procedures;
  for (std::size_t i = 0; i < d.procedures.size(); ++i) {
    NodeId id = graph.add_node(NodeKind::Procedure, d.procedures[i],
                               {{"sample_id", sample.sample_id}, {"order", std::to_string(i)}});
    graph.add_edge(problem, id, EdgeLabel::HasProcedure);
    if (!procedures.empty()) graph.add_edge(procedures.back(), id, EdgeLabel::NextProcedure);
    procedures.push_back(id);
  }
  std::vector<NodeId> errors;
  for (std::size_t i = 0; i < d.errors.size(); ++i) {
    NodeId id = graph.add_node(NodeKind::Error, d.errors[i],
                               {{"sample_id", sample.sample_id}, {"order", std::to_string(i)}});
    graph.add_edge(problem, id, EdgeLabel::HasError);
    errors.push_back(id);
  }

  for (std::size_t i = 0; i < d.knowledge.size(); ++i) {
    std::optional<NodeId> owner;
    const auto& a = i < d.knowledge_attachment.size() ? d.knowledge_attachment[i] : std::nullopt;
    if (a && a->kind == StepRef::Procedure && a->index < procedures.size()) owner = procedures[a->index];
    if (a && a->kind == StepRef::Error && a->index < errors.size()) owner = errors[a->index];
    if (!owner && !procedures.empty()) owner = procedures.front();
    if (!owner && !errors.empty()) owner = errors.front();
    if (!owner) continue;  // no step to hang the knowledge on
    auto existing = graph.find_by_text(NodeKind::Knowledge, d.knowledge[i]);
    NodeId k = existing ? *existing : graph.add_node(NodeKind::Knowledge, d.knowledge[i]);
    graph.add_edge(*owner, k, EdgeLabel::UsesKnowledge);
  }
  return InsertResult{problem, graph.node_count() - before};
}

// ---------------------------------------------------------------------------
// Build

std::string BuildReport::to_json() const {
  nlohmann::ordered_json j;
  j["processed"] = processed;
  j["rejected"] = rejected;
  j["malformed"] = malformed;
  j["duplicates"] = duplicates;
  j["nodes"] = nodes;
  j["edges"] = edges;
  return j.dump();
}

BuildResult build_graph(const std::filesystem::path& dataset, llm::LlmClient& llm, const BuildConfig& config) {
  ParsedDataset parsed = parse_dataset(dataset);
  BuildResult result;
  result.report.malformed = parsed.rejects.size();
  result.rejects = parsed.rejects;

  const auto keep = first_occurrences(parsed.samples);
  result.report.duplicates = parsed.samples.size() - keep.size();

  std::vector<std::optional<DecomposeResult>> decomposed(keep.size());
  std::vector<std::exception_ptr> failures(keep.size());
  detail::parallel_for(keep.size(), config.workers, [&](std::size_t i) {
    try {
      decomposed[i] = decompose(parsed.samples[keep[i]], llm);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  });

  std::vector<Reject> failed;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const std::size_t s = keep[i];
    if (failures[i]) {
      try {
        std::rethrow_exception(failures[i]);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnparseableAfterRetries) throw;
        failed.push_back(Reject{parsed.lines[s], parsed.samples[s].sample_id, e.what(), parsed.raw[s]});
      }
      continue;
    }
    insert(decomposed[i]->decomposition, parsed.samples[s], result.graph);
    ++result.report.processed;
  }
  std::stable_sort(failed.begin(), failed.end(), [](const Reject& a, const Reject& b) { return a.sample_id < b.sample_id; });
  result.report.rejected = failed.size();
  result.rejects.insert(result.rejects.end(), failed.begin(), failed.end());
  result.report.nodes = result.graph.node_count();
  result.report.edges = result.graph.edge_count();
  return result;
}

std::string rejects_to_lines(const std::vector<Reject>& rejects) {
  std::string out;
  for (const auto& r : rejects) {
    nlohmann::ordered_json j;
    auto original = nlohmann::ordered_json::parse(r.record, nullptr, false);
    if (!original.is_discarded() && original.is_object()) {
      j = std::move(original);
    } else {
      j["raw"] = r.record;
    }
    j["line"] = r.line;
    j["reason"] = r.reason;
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

}  // namespace kgrar::ingest
