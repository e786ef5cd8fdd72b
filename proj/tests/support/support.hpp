#pragma once

// Fixture paths, golden files, random graphs and the brute-force oracles the
// unit and acceptance tests compare the library against.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgrar/embedding.hpp"
#include "kgrar/mkg.hpp"
#include "kgrar/retrieval.hpp"

namespace kgrar::test {

std::filesystem::path data_dir();
std::filesystem::path data(const std::string& name);
std::filesystem::path golden(const std::string& name);

// Compares `actual` with golden/<name>. With KGRAR_UPDATE_GOLDEN set the
// file is rewritten instead. Returns an empty string on a match, else a
// description of the first difference.
std::string check_golden(const std::string& name, const std::string& actual);

std::string read(const std::filesystem::path& path);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Random but schema-valid graph: a few branches/subfields/types, problems
// under them (some sharing text, to force similarity ties), procedure chains
// that may loop back, errors and shared knowledge.
struct RandomGraphOptions {
  std::size_t max_problems = 40;
  std::size_t max_steps = 4;
  bool allow_cycles = true;
  bool allow_stepless = true;  // some problems get no procedures or errors
};

mkg::KnowledgeGraph random_graph(std::uint64_t seed, const RandomGraphOptions& options = {});

// Vocabulary the random graphs draw from; classification labels for tests
// come from here too, including labels absent from a given graph.
const std::vector<std::string>& branch_words();
const std::vector<std::string>& subfield_words();
const std::vector<std::string>& type_words();

// ---------------------------------------------------------------------------
// Oracles. Written from the operation contracts, sharing no code with the
// library beyond the graph container's plain accessors.

// Nodes within `depth` out-edge hops of root, computed by repeated full edge
// scans; keeps root plus Procedure/Error/Knowledge nodes.
std::set<mkg::NodeId> naive_dfs_nodes(const mkg::KnowledgeGraph& g, mkg::NodeId root, std::size_t depth);

// Nodes within `depth` hops over edges in either direction, never stepping
// onto taxonomy nodes.
std::set<mkg::NodeId> naive_bfs_nodes(const mkg::KnowledgeGraph& g, mkg::NodeId root, std::size_t depth);

// Tier the filter should stop at, and the problems it should return.
struct ExpectedFilter {
  retrieval::FilterLevel level;
  std::set<mkg::NodeId> problems;
};
ExpectedFilter naive_filter(const mkg::KnowledgeGraph& g, const retrieval::QueryClassification& c);

// Plain cosine over two vectors, index order.
double naive_cosine(const std::vector<double>& a, const std::vector<double>& b);

// argmax similarity over candidates, ties to the smallest id.
mkg::NodeId naive_best(const mkg::KnowledgeGraph& g, const std::vector<mkg::NodeId>& candidates,
                       const std::string& query, embedding::EmbeddingProvider& provider);

// Procedure/Error nodes reachable from the problems over out-edges.
std::set<mkg::NodeId> naive_step_space(const mkg::KnowledgeGraph& g, const std::vector<mkg::NodeId>& problems);

// Voting, straight from the rule statements.
struct OracleBallot {
  std::string answer;
  std::vector<double> scores;
};
std::string naive_vote(const std::vector<OracleBallot>& ballots, int strategy);  // 0 Maj, 1 Last, 2 Min, 3 MinMax, 4 LastMax

// exp(y) / (exp(y) + exp(n)) in long double without any shift.
long double naive_softmax_yes(long double y, long double n);

}  // namespace kgrar::test
