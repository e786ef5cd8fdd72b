#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "kgrar/embedding.hpp"
#include "kgrar/mkg.hpp"
#include "kgrar/reason.hpp"
#include "kgrar/retrieval.hpp"

using namespace kgrar;

namespace {

// Three-level taxonomy over `problems` problems, four chained steps and one
// error each, knowledge shared across a small pool.
mkg::KnowledgeGraph make_graph(std::size_t problems) {
  mkg::KnowledgeGraph g;
  std::mt19937_64 rng(problems);
  for (std::size_t i = 0; i < problems; ++i) {
    auto b = g.add_node(mkg::NodeKind::Branch, "branch " + std::to_string(rng() % 5));
    auto s = g.add_node(mkg::NodeKind::Subfield, "subfield " + std::to_string(rng() % 15));
    auto t = g.add_node(mkg::NodeKind::ProblemType, "type " + std::to_string(rng() % 40));
    g.add_edge(b, s, mkg::EdgeLabel::HasSubfield);
    g.add_edge(s, t, mkg::EdgeLabel::HasType);
    auto p = g.add_node(mkg::NodeKind::Problem, "problem " + std::to_string(i) + " about " + std::to_string(rng() % 97));
    g.add_edge(t, p, mkg::EdgeLabel::HasProblem);
    mkg::NodeId prev{};
    for (int k = 0; k < 4; ++k) {
      auto step = g.add_node(mkg::NodeKind::Procedure, "step " + std::to_string(k) + " of " + std::to_string(i));
      g.add_edge(p, step, mkg::EdgeLabel::HasProcedure);
      if (k) g.add_edge(prev, step, mkg::EdgeLabel::NextProcedure);
      auto know = g.add_node(mkg::NodeKind::Knowledge, "fact " + std::to_string(rng() % 50));
      g.add_edge(step, know, mkg::EdgeLabel::UsesKnowledge);
      prev = step;
    }
    auto err = g.add_node(mkg::NodeKind::Error, "mistake in " + std::to_string(i));
    g.add_edge(p, err, mkg::EdgeLabel::HasError);
  }
  return g;
}

void BM_Cosine(benchmark::State& state) {
  embedding::HashEmbeddingProvider emb(static_cast<std::size_t>(state.range(0)));
  auto a = emb.embed("two x plus three");
  auto b = emb.embed("subtract three from both sides");
  for (auto _ : state) benchmark::DoNotOptimize(embedding::cosine(a, b));
}
BENCHMARK(BM_Cosine)->Arg(64)->Arg(768)->Arg(1536);

void BM_RankProblems(benchmark::State& state) {
  auto g = make_graph(static_cast<std::size_t>(state.range(0)));
  embedding::HashEmbeddingProvider emb;
  embedding::EmbeddingCache cache;
  retrieval::CandidateSet all;
  const auto& ids = g.ids_of(mkg::NodeKind::Problem);
  all.problem_ids.assign(ids.begin(), ids.end());
  for (auto _ : state)
    benchmark::DoNotOptimize(retrieval::rank_problems("problem about 42", g, all, emb, &cache));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RankProblems)->Arg(100)->Arg(1000);

void BM_Filter(benchmark::State& state) {
  auto g = make_graph(static_cast<std::size_t>(state.range(0)));
  retrieval::QueryClassification c{"Branch 1", "subfield 4", "no such type"};
  for (auto _ : state) benchmark::DoNotOptimize(retrieval::filter_candidates(g, c));
}
BENCHMARK(BM_Filter)->Arg(100)->Arg(1000);

void BM_DfsContext(benchmark::State& state) {
  auto g = make_graph(500);
  auto root = *g.ids_of(mkg::NodeKind::Problem).begin();
  for (auto _ : state) benchmark::DoNotOptimize(mkg::dfs_context(g, root, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_DfsContext)->DenseRange(1, 4);

void BM_BfsContext(benchmark::State& state) {
  auto g = make_graph(500);
  auto root = *g.ids_of(mkg::NodeKind::Procedure).begin();
  for (auto _ : state) benchmark::DoNotOptimize(mkg::bfs_context(g, root, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_BfsContext)->DenseRange(1, 4);

void BM_Vote(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<reason::Ballot> ballots(static_cast<std::size_t>(state.range(0)));
  for (auto& b : ballots) {
    b.answer = std::to_string(rng() % 4);
    for (int s = 0; s < 8; ++s) b.scores.push_back(u(rng));
  }
  auto strategy = static_cast<reason::VotingStrategy>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(reason::vote(ballots, strategy));
}
BENCHMARK(BM_Vote)->ArgsProduct({{8, 64}, {0, 1, 2, 3, 4}});

}  // namespace

BENCHMARK_MAIN();
