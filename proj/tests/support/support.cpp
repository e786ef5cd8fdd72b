#include "support.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#ifndef KGRAR_TEST_DATA_DIR
#error "KGRAR_TEST_DATA_DIR must be defined"
#endif

namespace kgrar::test {

namespace fs = std::filesystem;
using mkg::EdgeLabel;
using mkg::NodeId;
using mkg::NodeKind;

fs::path data_dir() { return fs::path(KGRAR_TEST_DATA_DIR); }
fs::path data(const std::string& name) { return data_dir() / name; }
fs::path golden(const std::string& name) { return data_dir() / "golden" / name; }

std::string read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string check_golden(const std::string& name, const std::string& actual) {
  const fs::path p = golden(name);
  if (std::getenv("KGRAR_UPDATE_GOLDEN")) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << actual;
    return {};
  }
  if (!fs::exists(p)) return "golden file missing: " + p.string();
  const std::string expected = read(p);
  if (expected == actual) return {};
  std::size_t i = 0;
  while (i < expected.size() && i < actual.size() && expected[i] == actual[i]) ++i;
  std::size_t line = 1 + static_cast<std::size_t>(std::count(expected.begin(), expected.begin() + static_cast<long>(i), '\n'));
  return name + ": differs at byte " + std::to_string(i) + " (line " + std::to_string(line) + "); expected " +
         std::to_string(expected.size()) + " bytes, got " + std::to_string(actual.size());
}

TempDir::TempDir() {
  static std::random_device rd;
  std::mt19937_64 rng(rd());
  for (;;) {
    path_ = fs::temp_directory_path() / ("kgrar-test-" + std::to_string(rng()));
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& branch_words() {
  static const std::vector<std::string> w{"Algebra", "Geometry", "Number Theory", "Precalculus", "Counting"};
  return w;
}
const std::vector<std::string>& subfield_words() {
  static const std::vector<std::string> w{"Linear Equations", "Quadratics", "Triangles", "Circles",
                                          "Divisibility", "Modular Arithmetic", "Vectors", "Permutations"};
  return w;
}
const std::vector<std::string>& type_words() {
  static const std::vector<std::string> w{"Factoring", "Substitution", "Area", "Perimeter", "Remainders",
                                          "GCD", "Dot Product", "Arrangements", "Completing the Square"};
  return w;
}

namespace {

std::string random_case(std::string s, std::mt19937_64& rng) {
  switch (rng() % 4) {
    case 0:
      for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      break;
    case 1:
      for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      break;
    default: break;
  }
  return s;
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[rng() % v.size()];
}

}  // namespace

mkg::KnowledgeGraph random_graph(std::uint64_t seed, const RandomGraphOptions& o) {
  std::mt19937_64 rng(seed);
  mkg::KnowledgeGraph g;
  const std::size_t problems = 1 + rng() % std::max<std::size_t>(o.max_problems, 1);
  const std::size_t branches = 1 + rng() % branch_words().size();
  const std::size_t subfields = 1 + rng() % subfield_words().size();
  const std::size_t types = 1 + rng() % type_words().size();

  std::vector<std::string> problem_texts;
  std::vector<NodeId> knowledge;
  static const std::vector<std::string> verbs{"Solve", "Compute", "Find", "Evaluate", "Simplify"};
  static const std::vector<std::string> objects{"the value of x", "the area", "the remainder", "the sum",
                                                "the number of ways", "the product"};
  for (std::size_t p = 0; p < problems; ++p) {
    NodeId b = g.add_node(NodeKind::Branch, random_case(branch_words()[rng() % branches], rng));
    NodeId s = g.add_node(NodeKind::Subfield, random_case(subfield_words()[rng() % subfields], rng));
    NodeId t = g.add_node(NodeKind::ProblemType, random_case(type_words()[rng() % types], rng));
    g.add_edge(b, s, EdgeLabel::HasSubfield);
    g.add_edge(s, t, EdgeLabel::HasType);

    std::string text;
    if (!problem_texts.empty() && rng() % 5 == 0) {
      text = pick(problem_texts, rng);
    } else {
      text = pick(verbs, rng) + " " + pick(objects, rng) + " when n = " + std::to_string(rng() % 1000) + ".";
      problem_texts.push_back(text);
    }
    NodeId prob = g.add_node(NodeKind::Problem, text);
    g.add_edge(t, prob, EdgeLabel::HasProblem);

    if (o.allow_stepless && rng() % 10 == 0) continue;
    const std::size_t steps = rng() % (o.max_steps + 1);
    std::vector<NodeId> procs;
    for (std::size_t i = 0; i < steps; ++i) {
      NodeId pr = g.add_node(NodeKind::Procedure, "step " + std::to_string(i) + " of problem " + std::to_string(p) +
                                                      " variant " + std::to_string(rng() % 7));
      g.add_edge(prob, pr, EdgeLabel::HasProcedure);
      if (!procs.empty()) g.add_edge(procs.back(), pr, EdgeLabel::NextProcedure);
      procs.push_back(pr);
    }
    if (o.allow_cycles && procs.size() >= 2 && rng() % 4 == 0) g.add_edge(procs.back(), procs.front(), EdgeLabel::NextProcedure);
    const std::size_t errors = rng() % 3;
    std::vector<NodeId> errs;
    for (std::size_t i = 0; i < errors; ++i) {
      NodeId e = g.add_node(NodeKind::Error, "mistake " + std::to_string(i) + " on problem " + std::to_string(p));
      g.add_edge(prob, e, EdgeLabel::HasError);
      errs.push_back(e);
    }
    std::vector<NodeId> users = procs;
    users.insert(users.end(), errs.begin(), errs.end());
    for (NodeId u : users) {
      if (rng() % 2) continue;
      NodeId k;
      if (!knowledge.empty() && rng() % 2) {
        k = pick(knowledge, rng);
      } else {
        k = g.add_node(NodeKind::Knowledge, "fact " + std::to_string(knowledge.size()));
        knowledge.push_back(k);
      }
      g.add_edge(u, k, EdgeLabel::UsesKnowledge);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

namespace {

bool kept_by_dfs(NodeKind k) {
  return k == NodeKind::Procedure || k == NodeKind::Error || k == NodeKind::Knowledge;
}

bool taxonomy(NodeKind k) {
  return k == NodeKind::Branch || k == NodeKind::Subfield || k == NodeKind::ProblemType;
}

std::string fold(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  std::size_t e = s.find_last_not_of(" \t\r\n");
  std::string out = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::set<NodeId> naive_dfs_nodes(const mkg::KnowledgeGraph& g, NodeId root, std::size_t depth) {
  std::set<NodeId> reach{root};
  for (std::size_t i = 0; i < depth; ++i) {
    std::set<NodeId> next = reach;
    for (const auto& e : g.edges())
      if (reach.contains(e.src)) next.insert(e.dst);
    if (next == reach) break;
    reach = std::move(next);
  }
  std::set<NodeId> out;
  for (NodeId id : reach)
    if (id == root || kept_by_dfs(g.node(id).kind)) out.insert(id);
  return out;
}

std::set<NodeId> naive_bfs_nodes(const mkg::KnowledgeGraph& g, NodeId root, std::size_t depth) {
  std::set<NodeId> reach{root};
  for (std::size_t i = 0; i < depth; ++i) {
    std::set<NodeId> next = reach;
    for (const auto& e : g.edges()) {
      if (reach.contains(e.src) && !taxonomy(g.node(e.dst).kind)) next.insert(e.dst);
      if (reach.contains(e.dst) && !taxonomy(g.node(e.src).kind)) next.insert(e.src);
    }
    if (next == reach) break;
    reach = std::move(next);
  }
  return reach;
}

ExpectedFilter naive_filter(const mkg::KnowledgeGraph& g, const retrieval::QueryClassification& c) {
  // Parent links read straight off the edge list.
  std::multimap<NodeId, NodeId> parent;
  for (const auto& e : g.edges())
    if (e.label == EdgeLabel::HasSubfield || e.label == EdgeLabel::HasType || e.label == EdgeLabel::HasProblem)
      parent.emplace(e.dst, e.src);

  auto ancestors_match = [&](NodeId problem, NodeKind kind, const std::string& label) {
    std::vector<NodeId> frontier{problem};
    std::set<NodeId> seen;
    while (!frontier.empty()) {
      NodeId cur = frontier.back();
      frontier.pop_back();
      auto [lo, hi] = parent.equal_range(cur);
      for (auto it = lo; it != hi; ++it) {
        if (!seen.insert(it->second).second) continue;
        const auto& n = g.node(it->second);
        if (n.kind == kind && fold(n.text) == fold(label)) return true;
        frontier.push_back(it->second);
      }
    }
    return false;
  };

  const std::pair<retrieval::FilterLevel, std::pair<NodeKind, std::string>> tiers[] = {
      {retrieval::FilterLevel::Type, {NodeKind::ProblemType, c.problem_type}},
      {retrieval::FilterLevel::Subfield, {NodeKind::Subfield, c.subfield}},
      {retrieval::FilterLevel::Branch, {NodeKind::Branch, c.branch}},
  };
  std::vector<NodeId> all;
  for (const auto& n : g.nodes())
    if (n.kind == NodeKind::Problem) all.push_back(n.id);
  for (const auto& [level, target] : tiers) {
    ExpectedFilter f{level, {}};
    for (NodeId p : all)
      if (ancestors_match(p, target.first, target.second)) f.problems.insert(p);
    if (!f.problems.empty()) return f;
  }
  return {retrieval::FilterLevel::All, {all.begin(), all.end()}};
}

double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::min(1.0, std::max(-1.0, c));
}

namespace {

std::string collapse(const std::string& s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

std::vector<double> vec(embedding::EmbeddingProvider& p, const std::string& text) {
  auto e = p.embed(collapse(text));
  return {e.components().begin(), e.components().end()};
}

}  // namespace

NodeId naive_best(const mkg::KnowledgeGraph& g, const std::vector<NodeId>& candidates, const std::string& query,
                  embedding::EmbeddingProvider& provider) {
  const auto q = vec(provider, query);
  std::optional<NodeId> best;
  double best_sim = 0;
  for (NodeId id : candidates) {
    double s = naive_cosine(q, vec(provider, g.node(id).text));
    if (!best || s > best_sim || (s == best_sim && id < *best)) {
      best = id;
      best_sim = s;
    }
  }
  return *best;
}

std::set<NodeId> naive_step_space(const mkg::KnowledgeGraph& g, const std::vector<NodeId>& problems) {
  std::set<NodeId> reach(problems.begin(), problems.end());
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto& e : g.edges()) {
      auto k = g.node(e.dst).kind;
      if (reach.contains(e.src) && (k == NodeKind::Procedure || k == NodeKind::Error) && reach.insert(e.dst).second)
        grew = true;
    }
  }
  std::set<NodeId> out;
  for (NodeId id : reach) {
    auto k = g.node(id).kind;
    if (k == NodeKind::Procedure || k == NodeKind::Error) out.insert(id);
  }
  return out;
}

std::string naive_vote(const std::vector<OracleBallot>& ballots, int strategy) {
  const std::size_t n = ballots.size();
  auto last = [&](std::size_t i) { return ballots[i].scores.empty() ? 0.0 : ballots[i].scores.back(); };
  auto min = [&](std::size_t i) {
    double m = ballots[i].scores.empty() ? 0.0 : ballots[i].scores[0];
    for (double s : ballots[i].scores) m = s < m ? s : m;
    return m;
  };
  if (strategy == 3 || strategy == 4) {
    // Winner: a chain whose key no other chain beats; earliest among them.
    for (std::size_t i = 0; i < n; ++i) {
      bool beaten = false;
      for (std::size_t j = 0; j < n; ++j) {
        double ki = strategy == 3 ? min(i) : last(i);
        double kj = strategy == 3 ? min(j) : last(j);
        if (kj > ki) beaten = true;
      }
      if (!beaten) return ballots[i].answer;
    }
    return {};
  }
  // Weight of an answer summed in chain order, recomputed from scratch for
  // every candidate.
  auto weight = [&](const std::string& a) {
    double w = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (ballots[j].answer != a) continue;
      w += strategy == 0 ? 1.0 : strategy == 1 ? last(j) : min(j);
    }
    return w;
  };
  for (std::size_t i = 0; i < n; ++i) {
    // Answer of chain i wins when no answer outweighs it and no earlier chain
    // carries an equally heavy different answer.
    bool ok = true;
    for (std::size_t j = 0; j < n && ok; ++j) {
      double wj = weight(ballots[j].answer), wi = weight(ballots[i].answer);
      if (wj > wi) ok = false;
      if (j < i && wj == wi && ballots[j].answer != ballots[i].answer) ok = false;
    }
    if (ok) return ballots[i].answer;
  }
  return {};
}

long double naive_softmax_yes(long double y, long double n) {
  long double ey = std::exp(y), en = std::exp(n);
  return ey / (ey + en);
}

}  // namespace kgrar::test
