#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgrar/config.hpp"
#include "kgrar/error.hpp"
#include "kgrar/ingest.hpp"
#include "kgrar/io.hpp"
#include "kgrar/mkg.hpp"
#include "kgrar/reason.hpp"
#include "kgrar/retrieval.hpp"

namespace kgrar::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Overrides {
  std::optional<std::size_t> n, max_depth, padding, k, workers;
  std::optional<double> theta;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> role, voting, graph;

  void add_to(CLI::App& app) {
    app.add_option("--n", n, "Best-of-N width");
    app.add_option("--max-depth", max_depth, "Maximum reasoning steps per chain");
    app.add_option("--padding", padding, "Steps generated per retrieve-refine round");
    app.add_option("--theta", theta, "End-of-reasoning threshold");
    app.add_option("--k", k, "Top-k problems kept for step retrieval");
    app.add_option("--role", role, "Teacher role: responsible, socratic, critical");
    app.add_option("--voting", voting, "Majority, Last, Min, MinMax or LastMax");
    app.add_option("--seed", seed, "Base seed; chain i uses seed + i");
    app.add_option("--workers", workers, "Concurrent chains");
    app.add_option("--graph", graph, "Graph file, overriding graph_path");
  }

  void apply(config::Config& c) const {
    auto& s = c.solve;
    if (n) s.n = *n;
    if (max_depth) s.max_depth = *max_depth;
    if (padding) s.padding = *padding;
    if (theta) s.theta = *theta;
    if (k) s.k = *k;
    if (workers) s.workers = *workers;
    if (seed) s.seed = *seed;
    if (role) {
      auto r = prprm::parse_role(*role);
      if (!r) throw Error(ErrorCode::ConfigInvalid, "--role: unknown role '" + *role + "'");
      s.role = *r;
    }
    if (voting) {
      auto v = reason::parse_voting(*voting);
      if (!v) throw Error(ErrorCode::ConfigInvalid, "--voting: unknown strategy '" + *voting + "'");
      s.voting = *v;
    }
    if (graph) c.graph_path = fs::path(*graph);
    config::validate(c);
  }
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyDataset: return kEmptyInput;
    case ErrorCode::AllChainsFailed:
    case ErrorCode::NoVotableTraces: return kNoVotable;
    default: return kFailure;
  }
}

mkg::KnowledgeGraph load_graph(const config::Config& c) {
  if (!c.graph_path) throw Error(ErrorCode::ConfigInvalid, "graph_path: required (or pass --graph)");
  return mkg::load(*c.graph_path);
}

ordered_json ids_json(const std::vector<mkg::NodeId>& ids) {
  ordered_json a = ordered_json::array();
  for (auto id : ids) a.push_back(id.value);
  return a;
}

ordered_json problem_record(const mkg::KnowledgeGraph& g, const retrieval::ProblemRetrieval& r, std::size_t rank) {
  const auto& m = r.matches[rank];
  ordered_json j;
  j["type"] = "problem";
  j["rank"] = rank + 1;
  j["level"] = retrieval::to_string(r.candidates.level);
  j["candidates"] = r.candidates.problem_ids.size();
  j["node_id"] = m.problem_id.value;
  j["similarity"] = m.similarity;
  j["text"] = g.node(m.problem_id).text;
  j["procedures"] = ids_json(m.procedures);
  j["errors"] = ids_json(m.errors);
  j["knowledge"] = ids_json(m.knowledge);
  std::vector<mkg::NodeId> context;
  for (const auto& n : m.context.nodes) context.push_back(n.id);
  j["context"] = ids_json(context);
  return j;
}

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int build_graph(const std::string& dataset, const std::string& out_path, std::optional<std::string> rejects_path,
                  std::optional<std::size_t> workers) {
    auto llm = config::make_llm(config_.prprm_llm, "prprm_llm");
    ingest::BuildConfig bc;
    bc.workers = workers.value_or(config_.solve.workers);
    auto result = ingest::build_graph(dataset, *llm, bc);
    mkg::save(result.graph, out_path);
    const fs::path rj = rejects_path ? fs::path(*rejects_path) : fs::path(out_path + ".rejects.jsonl");
    io::write_file(rj, ingest::rejects_to_lines(result.rejects));
    out_ << result.report.to_json() << "\n";
    if (result.report.processed == 0) {
      err_ << "error: no sample could be processed\n";
      return kFailure;
    }
    return kOk;
  }

  int retrieve(const std::string& question, std::optional<std::string> step) {
    auto graph = load_graph(config_);
    auto providers = config::make_providers(config_);
    retrieval::RankOptions options;
    options.k = config_.solve.k;
    auto r = retrieval::retrieve_problem(question, graph, *providers.embedder, providers.cache.get(),
                                         *providers.prprm, options);
    for (std::size_t i = 0; i < r.matches.size(); ++i) out_ << problem_record(graph, r, i).dump() << "\n";
    if (step) {
      auto m = retrieval::retrieve_step(*step, r.matches, graph, *providers.embedder, providers.cache.get(), options);
      ordered_json j;
      j["type"] = "step";
      j["node_id"] = m.step_id.value;
      j["similarity"] = m.similarity;
      j["text"] = graph.node(m.step_id).text;
      j["empty_step_space"] = m.empty_step_space;
      j["context"] = ids_json([&] {
        std::vector<mkg::NodeId> ids;
        for (const auto& n : m.context.nodes) ids.push_back(n.id);
        return ids;
      }());
      out_ << j.dump() << "\n";
    }
    providers.save_cache();
    return kOk;
  }

  int solve(const std::string& problem, std::optional<std::string> trace_dir) {
    auto graph = load_graph(config_);
    auto providers = config::make_providers(config_);
    auto result = reason::run_best_of_n(problem, graph, providers.view(), config_.solve);
    providers.save_cache();

    std::optional<fs::path> dir;
    if (trace_dir) dir = fs::path(*trace_dir);
    else if (config_.tracing.enabled) dir = config_.tracing.dir;
    if (dir) {
      fs::create_directories(*dir);
      for (const auto& t : result.traces)
        io::write_file(*dir / ("trace_" + std::to_string(t.chain) + ".jsonl"), reason::trace_to_lines(t));
    }
    if (!result.selected) {
      err_ << "error: all " << result.traces.size() << " chains failed";
      if (!result.traces.empty()) err_ << " (first: " << result.traces.front().failure << ")";
      err_ << "\n";
      return kNoVotable;
    }
    out_ << *result.selected << "\n";
    return kOk;
  }

  int eval(const std::string& dataset, const std::string& report_path, std::optional<std::string> trace_dir) {
    auto items = reason::parse_benchmark(dataset);
    auto graph = load_graph(config_);
    auto providers = config::make_providers(config_);
    std::optional<fs::path> dir;
    if (trace_dir) dir = fs::path(*trace_dir);
    else if (config_.tracing.enabled) dir = config_.tracing.dir;
    auto report = reason::evaluate(items, graph, providers.view(), config_.solve, dir);
    providers.save_cache();
    io::write_file(report_path, report.to_json());
    out_ << report.render_table();
    return kOk;
  }

  int stats() {
    auto graph = load_graph(config_);
    auto s = graph.stats();
    ordered_json j;
    j["nodes"] = s.node_count;
    j["edges"] = s.edge_count;
    ordered_json kinds;
    for (std::size_t i = 0; i < mkg::kNodeKindCount; ++i)
      kinds[std::string(mkg::to_string(static_cast<mkg::NodeKind>(i)))] = s.per_kind[i];
    j["kinds"] = std::move(kinds);
    out_ << j.dump() << "\n";
    return kOk;
  }

  config::Config config_;

 private:
  std::ostream& out_;
  std::ostream& err_;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-graph retrieval-augmented step-by-step reasoning", "kgrar"};
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  app.add_option("-c,--config", config_path, "Configuration file (JSON)");

  Overrides overrides;
  Runner runner(out, err);

  std::string dataset, out_path, question, problem, report_path = "eval_report.json";
  std::optional<std::string> rejects_path, step, trace_dir;
  std::optional<std::size_t> build_workers;
  std::function<int()> action;

  auto* build = app.add_subcommand("build-graph", "Build a knowledge graph from a rated-step dataset");
  build->add_option("dataset", dataset, "Dataset (line records)")->required();
  build->add_option("-o,--out", out_path, "Graph file to write")->required();
  build->add_option("--rejects", rejects_path, "Rejects file (default: <out>.rejects.jsonl)");
  build->add_option("--workers", build_workers, "Concurrent decompositions");
  build->callback([&] { action = [&] { return runner.build_graph(dataset, out_path, rejects_path, build_workers); }; });

  auto* retrieve = app.add_subcommand("retrieve", "Print the problems (and optionally the step) retrieved for a question");
  retrieve->add_option("question", question, "Question text")->required();
  retrieve->add_option("--steps", step, "Step text for step-level retrieval");
  overrides.add_to(*retrieve);
  retrieve->callback([&] { action = [&] { return runner.retrieve(question, step); }; });

  auto* solve = app.add_subcommand("solve", "Solve one problem with Best-of-N search");
  solve->add_option("problem", problem, "Problem text")->required();
  solve->add_option("--trace-dir", trace_dir, "Write one trace file per chain here");
  overrides.add_to(*solve);
  solve->callback([&] { action = [&] { return runner.solve(problem, trace_dir); }; });

  auto* eval = app.add_subcommand("eval", "Evaluate a benchmark dataset");
  eval->add_option("dataset", dataset, "Benchmark (line records)")->required();
  eval->add_option("--report", report_path, "Report file to write")->capture_default_str();
  eval->add_option("--trace-dir", trace_dir, "Write one trace file per item here");
  overrides.add_to(*eval);
  eval->callback([&] { action = [&] { return runner.eval(dataset, report_path, trace_dir); }; });

  auto* stats = app.add_subcommand("stats", "Print node and edge counts of a graph");
  stats->add_option("--graph", overrides.graph, "Graph file, overriding graph_path");
  stats->callback([&] { action = [&] { return runner.stats(); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kFailure;
  }

  try {
    if (config_path) runner.config_ = config::load(*config_path);
    overrides.apply(runner.config_);
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace kgrar::cli
