#include "kgrar/prp_rm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "kgrar/error.hpp"
#include "kgrar/prompts.hpp"
#include "kgrar/text.hpp"

namespace kgrar::prprm {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::ResponsibleTeacher: return "ResponsibleTeacher";
    case Role::SocraticTeacher: return "SocraticTeacher";
    case Role::CriticalTeacher: return "CriticalTeacher";
  }
  return "SocraticTeacher";
}

std::optional<Role> parse_role(std::string_view s) noexcept {
  if (text::iequals(s, "ResponsibleTeacher") || text::iequals(s, "responsible")) return Role::ResponsibleTeacher;
  if (text::iequals(s, "SocraticTeacher") || text::iequals(s, "socratic")) return Role::SocraticTeacher;
  if (text::iequals(s, "CriticalTeacher") || text::iequals(s, "critical")) return Role::CriticalTeacher;
  return std::nullopt;
}

std::string_view role_prompt(Role role) {
  switch (role) {
    case Role::ResponsibleTeacher: return prompts::resource("responsible_teacher");
    case Role::SocraticTeacher: return prompts::resource("socratic_teacher");
    case Role::CriticalTeacher: return prompts::resource("critical_teacher");
  }
  return prompts::resource("socratic_teacher");
}

// ---------------------------------------------------------------------------

namespace {

// Procedures other than the root, chained along NextProcedure edges. Chains
// start at procedures without an in-subgraph predecessor, lowest id first.
std::vector<const mkg::Node*> ordered_procedures(const mkg::Subgraph& sg) {
  std::map<mkg::NodeId, const mkg::Node*> procs;
  for (const auto& n : sg.nodes)
    if (n.kind == mkg::NodeKind::Procedure && n.id != sg.root) procs.emplace(n.id, &n);
  std::map<mkg::NodeId, std::vector<mkg::NodeId>> next;
  std::set<mkg::NodeId> has_pred;
  for (const auto& e : sg.edges) {
    if (e.label != mkg::EdgeLabel::NextProcedure) continue;
    if (!procs.contains(e.src) || !procs.contains(e.dst)) continue;
    next[e.src].push_back(e.dst);
    has_pred.insert(e.dst);
  }
  for (auto& [_, v] : next) std::sort(v.begin(), v.end());

  std::vector<const mkg::Node*> out;
  std::set<mkg::NodeId> emitted;
  auto walk = [&](mkg::NodeId start) {
    mkg::NodeId cur = start;
    while (!emitted.contains(cur)) {
      emitted.insert(cur);
      out.push_back(procs.at(cur));
      auto it = next.find(cur);
      if (it == next.end()) break;
      auto pick = std::find_if(it->second.begin(), it->second.end(), [&](mkg::NodeId n) { return !emitted.contains(n); });
      if (pick == it->second.end()) break;
      cur = *pick;
    }
  };
  for (const auto& [id, _] : procs)
    if (!has_pred.contains(id)) walk(id);
  for (const auto& [id, _] : procs)
    if (!emitted.contains(id)) walk(id);
  return out;
}

std::vector<const mkg::Node*> sorted_of(const mkg::Subgraph& sg, mkg::NodeKind kind) {
  std::vector<const mkg::Node*> out;
  for (const auto& n : sg.nodes)
    if (n.kind == kind && n.id != sg.root) out.push_back(&n);
  std::sort(out.begin(), out.end(), [](const mkg::Node* a, const mkg::Node* b) { return a->id < b->id; });
  return out;
}

std::string_view root_header(mkg::NodeKind kind) {
  switch (kind) {
    case mkg::NodeKind::Problem: return "Problem:";
    case mkg::NodeKind::Procedure: return "Step:";
    case mkg::NodeKind::Error: return "Error:";
    default: return "Item:";
  }
}

}  // namespace

std::string render_retrieval(const mkg::Subgraph& sg) {
  const mkg::Node* root = sg.find(sg.root);
  if (!root) throw Error(ErrorCode::InvalidArgument, "subgraph root missing from its node list");

  std::vector<std::string> sections;
  sections.push_back(std::string(root_header(root->kind)) + "\n" + text::trim(root->text));

  auto procs = ordered_procedures(sg);
  if (!procs.empty()) {
    std::string s = "Procedures:";
    for (std::size_t i = 0; i < procs.size(); ++i) s += "\n" + std::to_string(i + 1) + ". " + text::trim(procs[i]->text);
    sections.push_back(std::move(s));
  }
  auto bulleted = [&](std::string_view header, mkg::NodeKind kind) {
    auto nodes = sorted_of(sg, kind);
    if (nodes.empty()) return;
    std::string s(header);
    for (const auto* n : nodes) s += "\n- " + text::trim(n->text);
    sections.push_back(std::move(s));
  };
  bulleted("Errors:", mkg::NodeKind::Error);
  bulleted("Knowledge:", mkg::NodeKind::Knowledge);
  bulleted("Related problems:", mkg::NodeKind::Problem);

  std::string out;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (i) out += "\n\n";
    out += sections[i];
  }
  return out;
}

std::string flatten_history(std::span<const HistoryEntry> history) {
  if (history.empty()) return "(none)";
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) out += "\n\n";
    out += "[Entry " + std::to_string(i + 1) + "]\nItem:\n" + history[i].item_text + "\nRetrieved:\n" +
           history[i].raw_retrieval + "\nRefined:\n" + history[i].refined_retrieval;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<llm::ChatMessage> refine_messages(std::span<const HistoryEntry> history, std::string_view item_text,
                                              std::string_view raw_retrieval, Role role) {
  std::string user = "Refinement history:\n" + flatten_history(history) + "\n\nCurrent item:\n" +
                     std::string(item_text) + "\n\nRetrieved context:\n" + std::string(raw_retrieval) +
                     "\n\nRewrite the retrieved context into concise guidance targeted at the current item.";
  return {{llm::ChatRole::System, std::string(role_prompt(role))}, {llm::ChatRole::User, std::move(user)}};
}

Refinement refine(std::span<const HistoryEntry> history, std::string_view item_text, std::string_view raw_retrieval,
                  Role role, llm::LlmClient& llm, std::optional<std::uint64_t> seed) {
  llm::CompletionRequest req;
  req.messages = refine_messages(history, item_text, raw_retrieval, role);
  req.temperature = 0.0;
  req.max_tokens = 1024;
  req.seed = seed;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto resp = llm.complete(req);
    std::string t = text::trim(resp.text);
    if (!t.empty()) return Refinement{std::move(t), false};
  }
  std::string raw(raw_retrieval);
  if (text::is_blank(raw)) raw = std::string(item_text);
  return Refinement{std::move(raw), true};
}

// ---------------------------------------------------------------------------

double yes_no_probability(double logprob_yes, double logprob_no) {
  if (std::isnan(logprob_yes) || std::isnan(logprob_no))
    throw Error(ErrorCode::InvalidArgument, "log-probability is NaN");
  if (logprob_yes == logprob_no) return 0.5;
  const double m = std::max(logprob_yes, logprob_no);
  const double ey = std::exp(logprob_yes - m);
  const double en = std::exp(logprob_no - m);
  return ey / (ey + en);
}

std::vector<llm::ChatMessage> scoring_messages(const ScoringContext& ctx, std::string_view instruction) {
  std::string user = "Refinement history:\n" + flatten_history(ctx.history) + "\n\nSolution steps:";
  if (ctx.steps.empty()) user += "\n(none)";
  for (std::size_t i = 0; i < ctx.steps.size(); ++i)
    user += "\nStep " + std::to_string(i + 1) + ": " + text::trim(ctx.steps[i]);
  if (!ctx.steps.empty()) user += "\n\nStep under review: Step " + std::to_string(ctx.steps.size());
  user += "\n\n" + std::string(instruction);
  return {{llm::ChatRole::System, std::string(role_prompt(ctx.role))}, {llm::ChatRole::User, std::move(user)}};
}

ScoreResult yes_no_score(llm::LlmClient& llm, const ScoringContext& ctx, std::string_view instruction) {
  static const std::vector<std::string> kChoices = {"Yes", "No"};
  auto messages = scoring_messages(ctx, instruction);
  std::string last_text;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto q = llm::query_choices(llm, messages, kChoices, ctx.seed);
    if (q.logprobs) return ScoreResult{yes_no_probability(q.logprobs->at("Yes"), q.logprobs->at("No")), false};
    last_text = q.text;
  }
  std::string_view t = text::trim_view(last_text);
  std::size_t end = 0;
  while (end < t.size() && std::isalpha(static_cast<unsigned char>(t[end]))) ++end;
  std::string_view word = t.substr(0, end);
  if (text::iequals(word, "yes")) return ScoreResult{kFallbackYes, true};
  if (text::iequals(word, "no")) return ScoreResult{kFallbackNo, true};
  throw Error(ErrorCode::MissingTokenProbability, "no Yes/No probability and no Yes/No answer text");
}

ScoreResult score_step(llm::LlmClient& llm, const ScoringContext& ctx) {
  return yes_no_score(llm, ctx, kCorrectnessInstruction);
}

ScoreResult end_detect(llm::LlmClient& llm, const ScoringContext& ctx) {
  return yes_no_score(llm, ctx, kEndInstruction);
}

}  // namespace kgrar::prprm
