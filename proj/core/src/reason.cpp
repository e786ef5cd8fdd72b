#include "kgrar/reason.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "kgrar/error.hpp"
#include "kgrar/io.hpp"
#include "kgrar/prompts.hpp"
#include "kgrar/text.hpp"
#include "parallel.hpp"

namespace kgrar::reason {

using nlohmann::ordered_json;

std::string_view to_string(VotingStrategy s) noexcept {
  switch (s) {
    case VotingStrategy::Majority: return "Majority";
    case VotingStrategy::Last: return "Last";
    case VotingStrategy::Min: return "Min";
    case VotingStrategy::MinMax: return "MinMax";
    case VotingStrategy::LastMax: return "LastMax";
  }
  return "Majority";
}

std::optional<VotingStrategy> parse_voting(std::string_view s) noexcept {
  std::string key;
  for (char c : text::casefold(text::trim_view(s)))
    if (c != '-' && c != '_' && c != ' ') key += c;
  if (key == "majority" || key == "maj") return VotingStrategy::Majority;
  if (key == "last") return VotingStrategy::Last;
  if (key == "min") return VotingStrategy::Min;
  if (key == "minmax") return VotingStrategy::MinMax;
  if (key == "lastmax") return VotingStrategy::LastMax;
  return std::nullopt;
}

std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::EndThreshold: return "EndThreshold";
    case Termination::MaxDepth: return "MaxDepth";
    case Termination::Failed: return "Failed";
  }
  return "Failed";
}

namespace {

std::optional<Termination> parse_termination(std::string_view s) {
  for (auto t : {Termination::EndThreshold, Termination::MaxDepth, Termination::Failed})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

}  // namespace

void SolveConfig::validate() const {
  auto bad = [](const char* field, const std::string& why) {
    throw Error(ErrorCode::ConfigInvalid, std::string("solve.") + field + ": " + why);
  };
  if (n < 1) bad("n", "must be a positive integer");
  if (max_depth < 1) bad("max_depth", "must be a positive integer");
  if (padding < 1) bad("padding", "must be a positive integer");
  if (k < 1) bad("k", "must be a positive integer");
  if (!(theta > 0.0 && theta < 1.0)) bad("theta", "must lie strictly between 0 and 1");
  if (workers < 1) bad("workers", "must be a positive integer");
  if (!std::isfinite(temperature) || temperature < 0.0) bad("temperature", "must be a non-negative number");
}

SolveConfig SolveConfig::gsm8k_profile() {
  SolveConfig c;
  c.n = 4;
  return c;
}

std::size_t ReasoningTrace::retrieval_events() const noexcept {
  return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const auto& s) { return s.retrieved; }));
}

std::vector<double> ReasoningTrace::correctness() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.correctness);
  return out;
}

// ---------------------------------------------------------------------------
// Chains

retrieval::ProblemRetrieval prepare(std::string_view problem, const mkg::KnowledgeGraph& graph, Providers providers,
                                    const SolveConfig& config) {
  retrieval::RankOptions options;
  options.k = config.k;
  return retrieval::retrieve_problem(problem, graph, providers.embedder, providers.cache, providers.prprm, options);
}

std::vector<llm::ChatMessage> step_messages(std::string_view problem, std::string_view refined_context,
                                            std::span<const std::string> prior_steps) {
  std::string user = "Problem:\n" + text::trim(problem) + "\n\nGuidance:\n" +
                     (text::is_blank(refined_context) ? std::string("(none)") : text::trim(refined_context)) +
                     "\n\nPrevious steps:\n";
  if (prior_steps.empty()) user += "(none)\n";
  for (std::size_t i = 0; i < prior_steps.size(); ++i)
    user += "Step " + std::to_string(i + 1) + ": " + text::trim(prior_steps[i]) + "\n";
  user += "\nWrite step " + std::to_string(prior_steps.size() + 1) + ".";
  return {{llm::ChatRole::System, std::string(prompts::resource("reasoner"))}, {llm::ChatRole::User, std::move(user)}};
}

std::string generate_step(llm::LlmClient& llm, std::string_view problem, std::string_view refined_context,
                          std::span<const std::string> prior_steps, double temperature,
                          std::optional<std::uint64_t> seed) {
  llm::CompletionRequest req;
  req.messages = step_messages(problem, refined_context, prior_steps);
  req.temperature = temperature;
  req.max_tokens = 512;
  req.seed = seed;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string out = text::trim(llm.complete(req).text);
    if (!out.empty()) return out;
  }
  throw Error(ErrorCode::EmptyGeneration, "reasoner returned an empty step twice");
}

ReasoningTrace solve_chain(std::string_view problem, const retrieval::ProblemRetrieval& retrieval,
                           const mkg::KnowledgeGraph& graph, Providers providers, const SolveConfig& config,
                           std::size_t chain) {
  ReasoningTrace trace;
  trace.chain = chain;
  trace.seed = config.seed + chain;
  trace.problem = std::string(problem);
  const std::optional<std::uint64_t> seed = trace.seed;

  std::vector<prprm::HistoryEntry> history;
  std::vector<std::string> steps;
  try {
    if (retrieval.matches.empty()) throw Error(ErrorCode::NoProblems, "problem retrieval returned no match");
    trace.problem_raw_retrieval = prprm::render_retrieval(retrieval.matches.front().context);
    auto refined = prprm::refine(history, problem, trace.problem_raw_retrieval, config.role, providers.prprm, seed);
    trace.problem_refined_retrieval = refined.text;
    history.push_back({std::string(problem), trace.problem_raw_retrieval, refined.text});
    std::string context = refined.text;

    retrieval::RankOptions options;
    options.k = config.k;

    for (std::size_t t = 1; t <= config.max_depth; ++t) {
      StepRecord rec;
      rec.index = t;
      rec.text = generate_step(providers.reasoner, problem, context, steps, config.temperature, seed);
      steps.push_back(rec.text);

      prprm::ScoringContext sc{history, steps, config.role, seed};
      auto correct = prprm::score_step(providers.prprm, sc);
      auto end = prprm::end_detect(providers.prprm, sc);
      rec.correctness = correct.score;
      rec.end_probability = end.score;
      rec.score_fallback = correct.text_fallback || end.text_fallback;

      if (rec.end_probability > config.theta) {
        trace.steps.push_back(std::move(rec));
        trace.terminated_by = Termination::EndThreshold;
        break;
      }
      if (t == config.max_depth) {
        trace.steps.push_back(std::move(rec));
        trace.terminated_by = Termination::MaxDepth;
        break;
      }
      if (t % config.padding == 0) {
        auto match = retrieval::retrieve_step(rec.text, retrieval.matches, graph, providers.embedder, providers.cache,
                                              options);
        rec.retrieved = true;
        rec.raw_retrieval = prprm::render_retrieval(match.context);
        auto r = prprm::refine(history, rec.text, rec.raw_retrieval, config.role, providers.prprm, seed);
        rec.refined_retrieval = r.text;
        history.push_back({rec.text, rec.raw_retrieval, r.text});
        context = r.text;
      }
      trace.steps.push_back(std::move(rec));
    }
  } catch (const Error& e) {
    trace.terminated_by = Termination::Failed;
    trace.failure = e.what();
  }

  if (!trace.steps.empty()) {
    auto answer = extract_answer(trace);
    trace.final_answer = answer.answer;
    trace.unanswered = answer.unanswered;
  } else {
    trace.unanswered = true;
  }
  return trace;
}

ReasoningTrace solve_one(std::string_view problem, const mkg::KnowledgeGraph& graph, Providers providers,
                         const SolveConfig& config) {
  config.validate();
  auto r = prepare(problem, graph, providers, config);
  return solve_chain(problem, r, graph, providers, config, 0);
}

BestOfN run_best_of_n(std::string_view problem, const mkg::KnowledgeGraph& graph, Providers providers,
                      const SolveConfig& config) {
  config.validate();
  BestOfN out;
  out.retrieval = prepare(problem, graph, providers, config);
  out.traces.resize(config.n);
  detail::parallel_for(config.n, config.workers, [&](std::size_t i) {
    out.traces[i] = solve_chain(problem, out.retrieval, graph, providers, config, i);
  });
  if (std::any_of(out.traces.begin(), out.traces.end(), [](const auto& t) { return !t.failed(); }))
    out.selected = vote(out.traces, config.voting);
  return out;
}

BestOfN solve_best_of_n(std::string_view problem, const mkg::KnowledgeGraph& graph, Providers providers,
                        const SolveConfig& config) {
  auto out = run_best_of_n(problem, graph, providers, config);
  if (!out.selected) {
    std::string why = out.traces.empty() ? std::string() : out.traces.front().failure;
    throw Error(ErrorCode::AllChainsFailed,
                "all " + std::to_string(out.traces.size()) + " chains failed; first: " + why);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Voting

namespace {

double last_score(const Ballot& b) { return b.scores.empty() ? 0.0 : b.scores.back(); }
double min_score(const Ballot& b) {
  return b.scores.empty() ? 0.0 : *std::min_element(b.scores.begin(), b.scores.end());
}

// Weighted vote over distinct answers, ordered by first appearance so the
// strict comparison below keeps the earliest chain on ties.
template <class Weight>
std::string weighted(std::span<const Ballot> ballots, Weight weight) {
  std::vector<std::pair<std::string, double>> totals;
  for (const auto& b : ballots) {
    auto it = std::find_if(totals.begin(), totals.end(), [&](const auto& p) { return p.first == b.answer; });
    if (it == totals.end()) totals.emplace_back(b.answer, weight(b));
    else it->second += weight(b);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < totals.size(); ++i)
    if (totals[i].second > totals[best].second) best = i;
  return totals[best].first;
}

template <class Key>
std::string argmax(std::span<const Ballot> ballots, Key key) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < ballots.size(); ++i)
    if (key(ballots[i]) > key(ballots[best])) best = i;
  return ballots[best].answer;
}

}  // namespace

std::string vote(std::span<const Ballot> ballots, VotingStrategy strategy) {
  if (ballots.empty()) throw Error(ErrorCode::NoVotableTraces, "no completed chain to vote on");
  switch (strategy) {
    case VotingStrategy::Majority: return weighted(ballots, [](const Ballot&) { return 1.0; });
    case VotingStrategy::Last: return weighted(ballots, last_score);
    case VotingStrategy::Min: return weighted(ballots, min_score);
    case VotingStrategy::MinMax: return argmax(ballots, min_score);
    case VotingStrategy::LastMax: return argmax(ballots, last_score);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown voting strategy");
}

std::string vote(std::span<const ReasoningTrace> traces, VotingStrategy strategy) {
  std::vector<Ballot> ballots;
  for (const auto& t : traces)
    if (!t.failed()) ballots.push_back({t.final_answer, t.correctness()});
  return vote(ballots, strategy);
}

// ---------------------------------------------------------------------------
// Answers

namespace {

// Contents of the last \boxed{...} in s, braces balanced.
std::optional<std::string> last_boxed(std::string_view s) {
  static constexpr std::string_view kTag = "\\boxed{";
  std::optional<std::string> found;
  for (auto pos = s.find(kTag); pos != std::string_view::npos; pos = s.find(kTag, pos + 1)) {
    std::size_t open = pos + kTag.size();
    int depth = 1;
    std::size_t i = open;
    for (; i < s.size() && depth > 0; ++i) {
      if (s[i] == '{') ++depth;
      else if (s[i] == '}') --depth;
    }
    if (depth == 0) found = std::string(s.substr(open, i - 1 - open));
  }
  return found;
}

std::optional<std::string> answer_tag(std::string_view s) {
  std::string folded = text::casefold(s);
  auto pos = folded.rfind("answer:");
  if (pos == std::string::npos) return std::nullopt;
  std::string_view rest = s.substr(pos + 7);
  rest = rest.substr(0, rest.find('\n'));
  std::string v = text::trim(rest);
  while (!v.empty() && v.back() == '.') v.pop_back();
  v = text::trim(v);
  if (v.empty()) return std::nullopt;
  return v;
}

std::optional<std::string> trailing_number(std::string_view s) {
  std::string_view t = text::trim_view(s);
  while (!t.empty() && std::string_view(".!$)").find(t.back()) != std::string_view::npos) {
    t.remove_suffix(1);
    t = text::trim_view(t);
  }
  static const std::regex kNumber(R"(([-+]?\d[\d,]*(?:\.\d+)?(?:/\d+)?)$)");
  std::cmatch m;
  if (!std::regex_search(t.data(), t.data() + t.size(), m, kNumber)) return std::nullopt;
  return m[1].str();
}

bool enclosed_by_braces(std::string_view s) {
  if (s.size() < 2 || s.front() != '{' || s.back() != '}') return false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    else if (s[i] == '}' && --depth == 0 && i + 1 != s.size()) return false;
  }
  return depth == 0;
}

std::string canonical_number(std::string s) {
  static const std::regex kGrouped(R"(-?\d{1,3}(,\d{3})+(\.\d+)?)");
  static const std::regex kPlain(R"(-?\d+(\.\d+)?)");
  std::string body = s;
  if (!body.empty() && body.front() == '+') body.erase(0, 1);
  if (std::regex_match(body, kGrouped)) body.erase(std::remove(body.begin(), body.end(), ','), body.end());
  if (!std::regex_match(body, kPlain)) return s;

  bool negative = body.front() == '-';
  if (negative) body.erase(0, 1);
  auto dot = body.find('.');
  std::string whole = body.substr(0, dot);
  std::string frac = dot == std::string::npos ? std::string() : body.substr(dot + 1);
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  auto nz = whole.find_first_not_of('0');
  whole = nz == std::string::npos ? "0" : whole.substr(nz);
  std::string out = frac.empty() ? whole : whole + "." + frac;
  if (negative && out != "0") out.insert(0, "-");
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view raw) {
  std::string s = text::trim(raw);
  for (bool changed = true; changed;) {
    changed = false;
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
      s = text::trim(std::string_view(s).substr(1, s.size() - 2));
      changed = true;
    } else if (enclosed_by_braces(s)) {
      s = text::trim(std::string_view(s).substr(1, s.size() - 2));
      changed = true;
    }
  }
  s = text::normalize_whitespace(s);
  return canonical_number(std::move(s));
}

ExtractedAnswer extract_answer(std::span<const std::string> steps) {
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    if (auto b = last_boxed(*it)) return {normalize_answer(*b), false};
    if (auto a = answer_tag(*it)) return {normalize_answer(*a), false};
  }
  if (!steps.empty()) {
    if (auto n = trailing_number(steps.back())) return {normalize_answer(*n), false};
  }
  return {"", true};
}

ExtractedAnswer extract_answer(const ReasoningTrace& trace) {
  std::vector<std::string> texts;
  texts.reserve(trace.steps.size());
  for (const auto& s : trace.steps) texts.push_back(s.text);
  return extract_answer(texts);
}

// ---------------------------------------------------------------------------
// Trace files

std::string trace_to_lines(const ReasoningTrace& trace) {
  std::string out;
  ordered_json head;
  head["type"] = "trace";
  head["chain"] = trace.chain;
  head["seed"] = trace.seed;
  head["problem"] = trace.problem;
  head["problem_raw_retrieval"] = trace.problem_raw_retrieval;
  head["problem_refined_retrieval"] = trace.problem_refined_retrieval;
  head["final_answer"] = trace.final_answer;
  head["unanswered"] = trace.unanswered;
  head["terminated_by"] = to_string(trace.terminated_by);
  head["failure"] = trace.failure;
  head["step_count"] = trace.steps.size();
  out += head.dump() + "\n";
  for (const auto& s : trace.steps) {
    ordered_json j;
    j["type"] = "step";
    j["index"] = s.index;
    j["text"] = s.text;
    j["retrieved"] = s.retrieved;
    j["raw_retrieval"] = s.raw_retrieval;
    j["refined_retrieval"] = s.refined_retrieval;
    j["correctness"] = s.correctness;
    j["end_probability"] = s.end_probability;
    j["score_fallback"] = s.score_fallback;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<ReasoningTrace> traces_from_lines(std::string_view contents) {
  std::vector<ReasoningTrace> out;
  std::size_t expected = 0;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) -> void {
    throw Error(ErrorCode::FormatViolation, "line " + std::to_string(line_no) + ": " + why);
  };
  for (std::string_view line : io::split_lines(contents)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type")) fail("not a trace record");
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "item") continue;
      if (type == "trace") {
        if (expected != 0) fail("trace ended after " + std::to_string(out.back().steps.size()) + " steps");
        ReasoningTrace t;
        t.chain = j.at("chain").get<std::size_t>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.problem = j.at("problem").get<std::string>();
        t.problem_raw_retrieval = j.at("problem_raw_retrieval").get<std::string>();
        t.problem_refined_retrieval = j.at("problem_refined_retrieval").get<std::string>();
        t.final_answer = j.at("final_answer").get<std::string>();
        t.unanswered = j.at("unanswered").get<bool>();
        auto term = parse_termination(j.at("terminated_by").get<std::string>());
        if (!term) fail("unknown terminated_by");
        t.terminated_by = *term;
        t.failure = j.at("failure").get<std::string>();
        expected = j.at("step_count").get<std::size_t>();
        out.push_back(std::move(t));
      } else if (type == "step") {
        if (expected == 0) fail("step record outside a trace");
        StepRecord s;
        s.index = j.at("index").get<std::size_t>();
        s.text = j.at("text").get<std::string>();
        s.retrieved = j.at("retrieved").get<bool>();
        s.raw_retrieval = j.at("raw_retrieval").get<std::string>();
        s.refined_retrieval = j.at("refined_retrieval").get<std::string>();
        s.correctness = j.at("correctness").get<double>();
        s.end_probability = j.at("end_probability").get<double>();
        s.score_fallback = j.value("score_fallback", false);
        out.back().steps.push_back(std::move(s));
        --expected;
      } else {
        fail("unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
  }
  ++line_no;
  if (expected != 0) fail("truncated trace");
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<BenchmarkItem> parse_benchmark_text(std::string_view contents) {
  std::vector<BenchmarkItem> items;
  std::size_t line_no = 0;
  for (std::string_view line : io::split_lines(contents)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::FormatViolation, "line " + std::to_string(line_no) + ": " + why);
    };
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
    auto scalar = [&](const char* key, bool required) -> std::optional<std::string> {
      if (!j.contains(key) || j[key].is_null()) {
        if (required) fail(std::string("missing '") + key + "'");
        return std::nullopt;
      }
      const auto& v = j[key];
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number()) return v.dump();
      fail(std::string("'") + key + "' must be a string or number");
      return std::nullopt;
    };
    BenchmarkItem item;
    item.id = *scalar("id", true);
    item.problem = *scalar("problem", true);
    item.answer = *scalar("answer", true);
    item.level = scalar("level", false);
    item.subject = scalar("subject", false);
    if (text::is_blank(item.problem)) fail("empty problem");
    items.push_back(std::move(item));
  }
  if (items.empty()) throw Error(ErrorCode::EmptyDataset, "benchmark holds no items");
  return items;
}

std::vector<BenchmarkItem> parse_benchmark(const std::filesystem::path& path) {
  return parse_benchmark_text(io::read_file(path));
}

std::string format_accuracy(std::size_t correct, std::size_t total) {
  if (total == 0) return "0.0";
  // tenths = round_half_up(1000 * correct / total)
  const std::uint64_t num = 2000ULL * correct + total;
  const std::uint64_t tenths = num / (2ULL * total);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

namespace {

ordered_json tally_json(const Tally& t) {
  ordered_json j;
  j["correct"] = t.correct;
  j["total"] = t.total;
  j["accuracy"] = t.accuracy();
  return j;
}

ordered_json row_json(const LevelRow& r) {
  ordered_json j;
  j["selected"] = tally_json(r.selected);
  j["majority"] = tally_json(r.majority);
  j["last"] = tally_json(r.last);
  return j;
}

void count(LevelRow& row, const ItemResult& r) {
  ++row.selected.total;
  ++row.majority.total;
  ++row.last.total;
  row.selected.correct += r.correct;
  row.majority.correct += r.correct_majority;
  row.last.correct += r.correct_last;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string safe_file_stem(std::string_view id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  if (out.empty() || out == "." || out == "..") out = "item";
  return out;
}

}  // namespace

std::string EvalReport::to_json() const {
  ordered_json j;
  j["strategy"] = to_string(strategy);
  j["overall"] = row_json(overall);
  ordered_json levels_j = ordered_json::array();
  for (const auto& [level, row] : levels) {
    ordered_json l;
    l["level"] = level;
    l.update(row_json(row));
    levels_j.push_back(std::move(l));
  }
  j["levels"] = std::move(levels_j);
  ordered_json items_j = ordered_json::array();
  for (const auto& r : items) {
    ordered_json i;
    i["id"] = r.id;
    i["level"] = r.level ? ordered_json(*r.level) : ordered_json(nullptr);
    i["gold"] = r.gold;
    i["selected"] = r.selected;
    i["majority"] = r.majority;
    i["last"] = r.last;
    i["correct"] = r.correct;
    i["correct_majority"] = r.correct_majority;
    i["correct_last"] = r.correct_last;
    i["all_failed"] = r.all_failed;
    ordered_json answers = ordered_json::array();
    std::size_t failed = 0;
    for (const auto& t : r.traces) {
      answers.push_back(t.failed() ? ordered_json(nullptr) : ordered_json(t.final_answer));
      failed += t.failed();
    }
    i["answers"] = std::move(answers);
    i["failed_chains"] = failed;
    items_j.push_back(std::move(i));
  }
  j["items"] = std::move(items_j);
  return j.dump(2) + "\n";
}

std::string EvalReport::render_table(std::string_view method) const {
  constexpr std::size_t kCell = 14;
  std::size_t name_width = std::max<std::size_t>(method.size(), 6) + 1;

  std::vector<std::pair<std::string, const LevelRow*>> cols;
  for (const auto& [level, row] : levels) {
    std::string label = level;
    if (!label.empty() && std::all_of(label.begin(), label.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      label = "Level " + label;
    cols.emplace_back(std::move(label), &row);
  }
  cols.emplace_back("Overall", &overall);

  std::string l1 = pad("Method", name_width);
  std::string l2 = pad("", name_width);
  std::string l3 = pad(std::string(method), name_width);
  for (const auto& [label, row] : cols) {
    l1 += "| " + pad(label, kCell - 2);
    l2 += "| " + pad(pad("Maj", 6) + "Last", kCell - 2);
    l3 += "| " + pad(pad(format_accuracy(row->majority.correct, row->majority.total), 6) +
                         format_accuracy(row->last.correct, row->last.total),
                     kCell - 2);
  }
  auto rstrip = [](std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
  };
  std::string out = rstrip(l1) + "\n" + rstrip(l2) + "\n" + rstrip(l3) + "\n";
  out += "Accuracy (" + std::string(to_string(strategy)) + "): " +
         format_accuracy(overall.selected.correct, overall.selected.total) + " (" +
         std::to_string(overall.selected.correct) + "/" + std::to_string(overall.selected.total) + ")\n";
  return out;
}

EvalReport evaluate(std::span<const BenchmarkItem> items, const mkg::KnowledgeGraph& graph, Providers providers,
                    const SolveConfig& config, const std::optional<std::filesystem::path>& trace_dir) {
  config.validate();
  if (items.empty()) throw Error(ErrorCode::EmptyDataset, "benchmark holds no items");
  EvalReport report;
  report.strategy = config.voting;
  for (const auto& item : items) {
    auto run = run_best_of_n(item.problem, graph, providers, config);
    ItemResult r;
    r.id = item.id;
    r.level = item.level;
    r.gold = normalize_answer(item.answer);
    r.all_failed = !run.selected.has_value();
    if (!r.all_failed) {
      r.selected = *run.selected;
      r.majority = vote(run.traces, VotingStrategy::Majority);
      r.last = vote(run.traces, VotingStrategy::Last);
      r.correct = r.selected == r.gold;
      r.correct_majority = r.majority == r.gold;
      r.correct_last = r.last == r.gold;
    }
    r.traces = std::move(run.traces);

    if (trace_dir) {
      ordered_json head;
      head["type"] = "item";
      head["id"] = r.id;
      head["selected"] = r.selected;
      std::string body = head.dump() + "\n";
      for (const auto& t : r.traces) body += trace_to_lines(t);
      io::write_file(*trace_dir / (safe_file_stem(r.id) + ".jsonl"), body);
    }

    count(report.overall, r);
    if (r.level) count(report.levels[*r.level], r);
    report.items.push_back(std::move(r));
  }
  return report;
}

EvalReport evaluate(const std::filesystem::path& dataset, const mkg::KnowledgeGraph& graph, Providers providers,
                    const SolveConfig& config, const std::optional<std::filesystem::path>& trace_dir) {
  auto items = parse_benchmark(dataset);
  return evaluate(items, graph, providers, config, trace_dir);
}

}  // namespace kgrar::reason
