#include "kgrar/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "kgrar/error.hpp"
#include "kgrar/io.hpp"
#include "kgrar/prompts.hpp"
#include "kgrar/text.hpp"

namespace kgrar::retrieval {

using mkg::EdgeLabel;
using mkg::NodeId;
using mkg::NodeKind;

std::string_view to_string(FilterLevel level) noexcept {
  switch (level) {
    case FilterLevel::Type: return "Type";
    case FilterLevel::Subfield: return "Subfield";
    case FilterLevel::Branch: return "Branch";
    case FilterLevel::All: return "All";
  }
  return "All";
}

// ---------------------------------------------------------------------------
// Classification

namespace {

std::string vocabulary(const mkg::KnowledgeGraph& graph, NodeKind kind) {
  const auto& ids = graph.ids_of(kind);
  if (ids.empty()) return "(none)";
  std::string out;
  for (NodeId id : ids) {
    if (!out.empty()) out += "; ";
    out += text::normalize_whitespace(graph.node(id).text);
  }
  return out;
}

std::string strip_decoration(std::string_view s) {
  auto junk = [](char c) { return c == '*' || c == '"' || c == '`' || std::isspace(static_cast<unsigned char>(c)); };
  std::string_view t = s;
  while (!t.empty() && junk(t.front())) t.remove_prefix(1);
  while (!t.empty() && (junk(t.back()) || t.back() == '.')) t.remove_suffix(1);
  return std::string(t);
}

}  // namespace

std::vector<llm::ChatMessage> classification_messages(std::string_view question, const mkg::KnowledgeGraph& graph) {
  std::string user = "Existing branches: " + vocabulary(graph, NodeKind::Branch) +
                     "\nExisting subfields: " + vocabulary(graph, NodeKind::Subfield) +
                     "\nExisting problem types: " + vocabulary(graph, NodeKind::ProblemType) + "\n\nProblem:\n" +
                     text::trim(question);
  return {{llm::ChatRole::System, std::string(prompts::resource("classify"))}, {llm::ChatRole::User, std::move(user)}};
}

std::optional<QueryClassification> parse_classification(std::string_view response) {
  std::string_view body = text::trim_view(response);
  if (body.empty()) return std::nullopt;

  if (body.front() == '{') {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (!j.is_discarded() && j.is_object()) {
      auto field = [&](const char* k) {
        return j.contains(k) && j[k].is_string() ? text::trim(j[k].get<std::string>()) : std::string();
      };
      QueryClassification c{field("branch"), field("subfield"), field("problem_type")};
      if (!c.branch.empty() && !c.subfield.empty() && !c.problem_type.empty()) return c;
    }
    return std::nullopt;
  }

  QueryClassification c;
  for (std::string_view line : io::split_lines(body)) {
    auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    std::string key = text::casefold(strip_decoration(line.substr(0, colon)));
    std::string value = strip_decoration(line.substr(colon + 1));
    if (key == "branch") c.branch = value;
    else if (key == "subfield") c.subfield = value;
    else if (key == "problem type" || key == "problem_type" || key == "type") c.problem_type = value;
  }
  if (!c.branch.empty() && !c.subfield.empty() && !c.problem_type.empty()) return c;

  auto lines = io::split_lines(body);
  if (lines.size() == 1) {
    std::vector<std::string> parts;
    std::string_view rest = lines[0];
    while (true) {
      auto slash = rest.find('/');
      parts.push_back(strip_decoration(rest.substr(0, slash)));
      if (slash == std::string_view::npos) break;
      rest.remove_prefix(slash + 1);
    }
    if (parts.size() == 3 && std::none_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); }))
      return QueryClassification{parts[0], parts[1], parts[2]};
  }
  return std::nullopt;
}

QueryClassification classify_query(std::string_view question, llm::LlmClient& llm, const mkg::KnowledgeGraph& graph) {
  llm::CompletionRequest req;
  req.messages = classification_messages(question, graph);
  req.temperature = 0.0;
  req.max_tokens = 128;
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (auto c = parse_classification(llm.complete(req).text)) return *c;
  }
  std::string u(kUnknownLabel);
  return QueryClassification{u, u, u};
}

// ---------------------------------------------------------------------------
// Hierarchical filter

namespace {

void collect_below(const mkg::KnowledgeGraph& graph, NodeId id, std::set<NodeId>& problems) {
  const auto& n = graph.node(id);
  if (n.kind == NodeKind::Problem) {
    problems.insert(id);
    return;
  }
  static constexpr EdgeLabel kDown[] = {EdgeLabel::HasSubfield, EdgeLabel::HasType, EdgeLabel::HasProblem};
  for (const auto& nb : graph.neighbors(id, mkg::Direction::Out, kDown)) collect_below(graph, nb.edge.dst, problems);
}

std::vector<NodeId> problems_under(const mkg::KnowledgeGraph& graph, NodeKind kind, std::string_view label) {
  std::set<NodeId> problems;
  if (auto id = graph.find_by_text(kind, label)) collect_below(graph, *id, problems);
  return {problems.begin(), problems.end()};
}

}  // namespace

CandidateSet filter_candidates(const mkg::KnowledgeGraph& graph, const QueryClassification& c) {
  const auto& all = graph.ids_of(NodeKind::Problem);
  if (all.empty()) throw Error(ErrorCode::NoProblems, "graph has no problem nodes");
  if (auto ids = problems_under(graph, NodeKind::ProblemType, c.problem_type); !ids.empty())
    return {FilterLevel::Type, std::move(ids)};
  if (auto ids = problems_under(graph, NodeKind::Subfield, c.subfield); !ids.empty())
    return {FilterLevel::Subfield, std::move(ids)};
  if (auto ids = problems_under(graph, NodeKind::Branch, c.branch); !ids.empty())
    return {FilterLevel::Branch, std::move(ids)};
  return {FilterLevel::All, {all.begin(), all.end()}};
}

// ---------------------------------------------------------------------------
// Ranking

namespace {

struct Scored {
  NodeId id;
  double similarity;
};

bool ranks_before(const Scored& a, const Scored& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

std::vector<Scored> score_all(std::string_view query, const mkg::KnowledgeGraph& graph, std::span<const NodeId> ids,
                              embedding::EmbeddingProvider& provider, embedding::EmbeddingCache* cache,
                              const NodeObserver& observer) {
  const auto q = embedding::embed_cached(query, provider, cache);
  std::vector<Scored> out;
  out.reserve(ids.size());
  for (NodeId id : ids) {
    if (observer) observer(id);
    const auto e = embedding::embed_cached(graph.node(id).text, provider, cache);
    out.push_back(Scored{id, embedding::cosine(q, e)});
  }
  return out;
}

ProblemMatch make_problem_match(const mkg::KnowledgeGraph& graph, Scored s, std::size_t depth) {
  ProblemMatch m;
  m.problem_id = s.id;
  m.similarity = s.similarity;
  m.context = mkg::dfs_context(graph, s.id, depth);
  m.procedures = m.context.ids_of(NodeKind::Procedure);
  m.errors = m.context.ids_of(NodeKind::Error);
  m.knowledge = m.context.ids_of(NodeKind::Knowledge);
  return m;
}

}  // namespace

std::vector<ProblemMatch> rank_problems(std::string_view question, const mkg::KnowledgeGraph& graph,
                                        const CandidateSet& candidates, embedding::EmbeddingProvider& provider,
                                        embedding::EmbeddingCache* cache, const RankOptions& options) {
  if (options.k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  auto scored = score_all(question, graph, candidates.problem_ids, provider, cache, options.observer);
  const std::size_t keep = std::min(options.k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), ranks_before);
  std::vector<ProblemMatch> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(make_problem_match(graph, scored[i], options.dfs_depth));
  return out;
}

ProblemRetrieval retrieve_problem(std::string_view question, const mkg::KnowledgeGraph& graph,
                                  embedding::EmbeddingProvider& provider, embedding::EmbeddingCache* cache,
                                  llm::LlmClient& llm, const RankOptions& options) {
  if (graph.ids_of(NodeKind::Problem).empty()) throw Error(ErrorCode::NoProblems, "graph has no problem nodes");
  ProblemRetrieval r;
  r.classification = classify_query(question, llm, graph);
  r.candidates = filter_candidates(graph, r.classification);
  r.matches = rank_problems(question, graph, r.candidates, provider, cache, options);
  return r;
}

std::vector<NodeId> step_space(const mkg::KnowledgeGraph& graph, std::span<const NodeId> problems,
                               const NodeObserver& observer) {
  std::set<NodeId> steps;
  std::unordered_set<NodeId> seen;
  std::deque<NodeId> queue;
  for (NodeId p : problems) {
    if (observer) observer(p);
    if (seen.insert(p).second) queue.push_back(p);
  }
  while (!queue.empty()) {
    NodeId cur = queue.front();
    queue.pop_front();
    for (std::size_t e : graph.out_edge_indices(cur)) {
      NodeId dst = graph.edges()[e].dst;
      if (seen.contains(dst)) continue;
      const auto& n = graph.node(dst);
      if (n.kind != NodeKind::Procedure && n.kind != NodeKind::Error) continue;
      if (observer) observer(dst);
      seen.insert(dst);
      steps.insert(dst);
      queue.push_back(dst);
    }
  }
  return {steps.begin(), steps.end()};
}

StepMatch retrieve_step(std::string_view step_text, std::span<const ProblemMatch> top_problems,
                        const mkg::KnowledgeGraph& graph, embedding::EmbeddingProvider& provider,
                        embedding::EmbeddingCache* cache, const RankOptions& options) {
  if (top_problems.empty()) throw Error(ErrorCode::InvalidArgument, "step retrieval needs at least one problem");
  std::vector<NodeId> problems;
  problems.reserve(top_problems.size());
  for (const auto& m : top_problems) problems.push_back(m.problem_id);

  auto space = step_space(graph, problems, options.observer);
  if (space.empty()) {
    StepMatch fallback;
    fallback.step_id = top_problems.front().problem_id;
    fallback.similarity = top_problems.front().similarity;
    fallback.context = top_problems.front().context;
    fallback.empty_step_space = true;
    return fallback;
  }
  auto scored = score_all(step_text, graph, space, provider, cache, options.observer);
  auto best = std::min_element(scored.begin(), scored.end(), ranks_before);
  StepMatch m;
  m.step_id = best->id;
  m.similarity = best->similarity;
  m.context = mkg::bfs_context(graph, best->id, options.bfs_depth);
  return m;
}

}  // namespace kgrar::retrieval
