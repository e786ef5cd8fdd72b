#include <doctest.h>

#include <json.hpp>

#include "kgrar/error.hpp"
#include "kgrar/ingest.hpp"
#include "kgrar/io.hpp"
#include "support.hpp"

using namespace kgrar;
using namespace kgrar::ingest;
using mkg::EdgeLabel;
using mkg::NodeKind;

namespace {

ProcessSample sample(std::string id, std::string problem, std::vector<RatedStep> steps) {
  return ProcessSample{std::move(id), std::move(problem), std::move(steps), std::nullopt};
}

std::string record(const Decomposition& d) {
  nlohmann::json j;
  j["branch"] = d.branch;
  j["subfield"] = d.subfield;
  j["problem_type"] = d.problem_type;
  j["procedures"] = d.procedures;
  j["errors"] = d.errors;
  j["knowledge"] = d.knowledge;
  j["knowledge_attachment"] = nlohmann::json::array();
  for (const auto& a : d.knowledge_attachment) {
    if (!a) j["knowledge_attachment"].push_back(nullptr);
    else j["knowledge_attachment"].push_back((a->kind == StepRef::Procedure ? "procedure:" : "error:") + std::to_string(a->index));
  }
  return j.dump();
}

llm::CallbackLlm replying(std::vector<std::string> replies, int* calls) {
  return llm::CallbackLlm([replies = std::move(replies), calls](const llm::CompletionRequest&) {
    llm::CompletionResponse r;
    r.text = replies[std::min<std::size_t>(static_cast<std::size_t>(*calls), replies.size() - 1)];
    ++*calls;
    return r;
  });
}

const ProcessSample kMixed = sample("s1", "Solve 3x + 4 = 19.",
                                    {{"Subtract 4: 3x = 15.", 1}, {"Add 4: 3x = 23.", -1}, {"Divide: x = 5.", 1}});

Decomposition mixed_decomposition() {
  Decomposition d;
  d.branch = "Algebra";
  d.subfield = "Linear Equations";
  d.problem_type = "One Variable";
  d.procedures = {"Subtract the constant.", "Divide by the coefficient."};
  d.errors = {"Added instead of subtracting."};
  d.knowledge = {"Inverse operations.", "Equality is preserved by division."};
  d.knowledge_attachment = {KnowledgeAttachment{StepRef::Procedure, 0}, KnowledgeAttachment{StepRef::Error, 0}};
  return d;
}

}  // namespace

TEST_CASE("parse_dataset: fixture") {
  auto parsed = parse_dataset(test::data("prm_fixture.jsonl"));
  CHECK(parsed.samples.size() == 10);
  CHECK(parsed.rejects.empty());
  CHECK(parsed.samples.front().sample_id == "prm-001");
  CHECK(parsed.samples.front().steps.size() == 3);
  CHECK(parsed.samples.front().final_answer == "5");
  CHECK(parsed.lines.back() == 10);
}

TEST_CASE("parse_dataset: malformed lines become rejects with line numbers") {
  const std::string text =
      "{\"sample_id\":\"a\",\"problem\":\"p\",\"steps\":[{\"text\":\"t\",\"rating\":1}]}\n"
      "{\"sample_id\":\"b\",\"steps\":[{\"text\":\"t\",\"rating\":1}]}\n"
      "not json at all\n"
      "\n"
      "{\"sample_id\":\"c\",\"problem\":\"q\",\"steps\":[{\"text\":\"t\",\"rating\":2}]}\n"
      "{\"sample_id\":\"d\",\"problem\":\"r\",\"steps\":[]}\n";
  auto parsed = parse_dataset_text(text);
  REQUIRE(parsed.samples.size() == 1);
  REQUIRE(parsed.rejects.size() == 4);
  CHECK(parsed.rejects[0].line == 2);
  CHECK(parsed.rejects[0].sample_id == "b");
  CHECK(parsed.rejects[0].reason.find("problem") != std::string::npos);
  CHECK(parsed.rejects[1].line == 3);
  CHECK(parsed.rejects[2].line == 5);
  CHECK(parsed.rejects[3].line == 6);

  const auto dumped = rejects_to_lines(parsed.rejects);
  auto lines = io::split_lines(dumped);
  REQUIRE(lines.size() == 4);
  auto first = nlohmann::json::parse(std::string(lines[0]));
  CHECK(first["sample_id"] == "b");
  CHECK(first["line"] == 2);
  CHECK(first.contains("reason"));
  CHECK(nlohmann::json::parse(std::string(lines[1]))["raw"] == "not json at all");
}

TEST_CASE("parse_dataset: empty input") {
  CHECK_THROWS_AS(parse_dataset_text(""), Error);
  try {
    parse_dataset_text("\n  \n");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyDataset);
  }
  try {
    parse_dataset(test::data("no-such-file.jsonl"));
    FAIL("read a missing file");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoFailure);
  }
}

TEST_CASE("dedupe") {
  const std::vector<RatedStep> st{{"x", 1}};
  auto kept = dedupe({sample("1", "Solve x", st), sample("2", "Solve x", st)});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].sample_id == "1");
  CHECK(dedupe({sample("1", "  Solve   X ", st), sample("2", "solve x", st)}).size() == 1);
  std::vector<ProcessSample> distinct{sample("1", "a", st), sample("2", "b", st), sample("3", "c", st)};
  CHECK(dedupe(distinct) == distinct);
}

TEST_CASE("decompose: valid reply passes through") {
  int calls = 0;
  auto llm = replying({record(mixed_decomposition())}, &calls);
  auto r = decompose(kMixed, llm);
  CHECK(r.decomposition == mixed_decomposition());
  CHECK(r.retry_count == 0);
  CHECK(calls == 1);
}

TEST_CASE("decompose: repair after a malformed reply") {
  int calls = 0;
  auto llm = replying({"Sure! Here it is, in prose.", record(mixed_decomposition())}, &calls);
  auto r = decompose(kMixed, llm);
  CHECK(r.retry_count == 1);
  CHECK(r.decomposition == mixed_decomposition());

  // The repair turn carries the instruction.
  std::vector<llm::CompletionRequest> seen;
  llm::CallbackLlm recorder([&](const llm::CompletionRequest& req) {
    seen.push_back(req);
    llm::CompletionResponse resp;
    resp.text = seen.size() == 1 ? "{oops" : record(mixed_decomposition());
    return resp;
  });
  decompose(kMixed, recorder);
  REQUIRE(seen.size() == 2);
  CHECK(seen[1].messages.back().content == kRepairInstruction);
  CHECK(seen[1].messages[seen[1].messages.size() - 2].role == llm::ChatRole::Assistant);
}

TEST_CASE("decompose: gives up after the retry budget") {
  int calls = 0;
  auto llm = replying({"never json"}, &calls);
  try {
    decompose(kMixed, llm);
    FAIL("decomposed garbage");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnparseableAfterRetries);
  }
  CHECK(calls == 1 + kDecomposeRetries);
}

TEST_CASE("decompose: provider failures propagate") {
  llm::CallbackLlm down([](const llm::CompletionRequest&) -> llm::CompletionResponse {
    throw Error(ErrorCode::Timeout, "no answer");
  });
  try {
    decompose(kMixed, down);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Timeout);
  }
}

TEST_CASE("parse_decomposition: rating mapping and fallbacks") {
  auto d = parse_decomposition(record(mixed_decomposition()), kMixed);
  REQUIRE(d);
  CHECK(d->procedures.size() == 2);
  CHECK(d->errors.size() == 1);

  // Wrong-length lists fall back to the rated step texts.
  auto wrong = mixed_decomposition();
  wrong.procedures = {"only one"};
  wrong.errors = {};
  auto fixed = parse_decomposition(record(wrong), kMixed);
  REQUIRE(fixed);
  CHECK(fixed->procedures == std::vector<std::string>{"Subtract 4: 3x = 15.", "Divide: x = 5."});
  CHECK(fixed->errors == std::vector<std::string>{"Add 4: 3x = 23."});

  auto missing = mixed_decomposition();
  missing.branch = "";
  CHECK_FALSE(parse_decomposition(record(missing), kMixed));
  CHECK_FALSE(parse_decomposition("[1, 2, 3]", kMixed));
  CHECK(parse_decomposition("```json\n" + record(mixed_decomposition()) + "\n```", kMixed));
}

TEST_CASE("decomposition prompt snapshot") {
  ProcessSample s = kMixed;
  s.final_answer = "5";
  auto msgs = decomposition_messages(s);
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[1].content ==
        "Problem:\nSolve 3x + 4 = 19.\n\nSteps:\n1. [rating 1] Subtract 4: 3x = 15.\n2. [rating -1] Add 4: 3x = "
        "23.\n3. [rating 1] Divide: x = 5.\n\nFinal answer: 5");
  CHECK(msgs[0].content.find("knowledge_attachment") != std::string::npos);
}

TEST_CASE("insert: structure and taxonomy sharing") {
  mkg::KnowledgeGraph g;
  auto d = mixed_decomposition();
  d.procedures.push_back("Check by substitution.");
  ProcessSample s = kMixed;
  s.steps.push_back({"Check: 3*5+4 = 19.", 1});
  auto r = insert(d, s, g);
  CHECK(g.node(r.problem_id).kind == NodeKind::Problem);
  CHECK(r.created == 3 + 1 + 3 + 1 + 2);

  std::size_t next = 0, uses = 0;
  for (const auto& e : g.edges()) {
    next += e.label == EdgeLabel::NextProcedure;
    uses += e.label == EdgeLabel::UsesKnowledge;
  }
  CHECK(next == 2);
  CHECK(uses == 2);
  CHECK(g.neighbors(r.problem_id, mkg::Direction::Out).size() == 4);

  auto d2 = mixed_decomposition();
  d2.branch = "ALGEBRA";
  ProcessSample s2 = kMixed;
  s2.sample_id = "s2";
  s2.problem = "Solve 2x = 8.";
  auto r2 = insert(d2, s2, g);
  CHECK(g.ids_of(NodeKind::Branch).size() == 1);
  CHECK(g.ids_of(NodeKind::Knowledge).size() == 2);
  CHECK(r2.created == 1 + 2 + 1);
  CHECK_FALSE(g.validate().has_value());
}

TEST_CASE("insert: unattached knowledge goes to the first procedure") {
  mkg::KnowledgeGraph g;
  auto d = mixed_decomposition();
  d.knowledge = {"Floating fact."};
  d.knowledge_attachment = {std::nullopt};
  auto r = insert(d, kMixed, g);
  auto procs = g.neighbors(r.problem_id, mkg::Direction::Out, std::vector<EdgeLabel>{EdgeLabel::HasProcedure});
  REQUIRE_FALSE(procs.empty());
  auto k = g.neighbors(procs.front().node->id, mkg::Direction::Out, std::vector<EdgeLabel>{EdgeLabel::UsesKnowledge});
  REQUIRE(k.size() == 1);
  CHECK(k[0].node->text == "Floating fact.");
}

TEST_CASE("insert: node arithmetic without sharing") {
  mkg::KnowledgeGraph g;
  std::size_t expected = 0;
  for (int i = 0; i < 5; ++i) {
    Decomposition d;
    d.branch = "B" + std::to_string(i);
    d.subfield = "F" + std::to_string(i);
    d.problem_type = "T" + std::to_string(i);
    std::vector<RatedStep> steps;
    for (int j = 0; j <= i; ++j) {
      d.procedures.push_back("proc " + std::to_string(i) + "." + std::to_string(j));
      steps.push_back({"s", 1});
    }
    for (int j = 0; j < i % 2; ++j) {
      d.errors.push_back("err " + std::to_string(i));
      steps.push_back({"e", -1});
    }
    d.knowledge = {"k" + std::to_string(i)};
    d.knowledge_attachment = {std::nullopt};
    expected += 3 + 1 + d.procedures.size() + d.errors.size() + d.knowledge.size();
    insert(d, sample(std::to_string(i), "problem " + std::to_string(i), steps), g);
  }
  CHECK(g.node_count() == expected);
}

TEST_CASE("build_graph: fixture reproduces the golden graph") {
  auto script = llm::ScriptedLlm::from_file(test::data("decompose_script.jsonl"));
  auto result = build_graph(test::data("prm_fixture.jsonl"), script, {.workers = 4});
  CHECK(result.report.processed == 10);
  CHECK(result.report.rejected == 0);
  CHECK(result.report.nodes == 69);
  CHECK(result.report.edges == 75);
  CHECK(test::check_golden("fixture_graph.mkg", mkg::serialize(result.graph)) == "");

  // Same input built again, sequentially: identical bytes.
  auto again = llm::ScriptedLlm::from_file(test::data("decompose_script.jsonl"));
  CHECK(mkg::serialize(build_graph(test::data("prm_fixture.jsonl"), again).graph) == mkg::serialize(result.graph));
}

TEST_CASE("build_graph: all duplicates collapse to one problem") {
  test::TempDir dir;
  std::string text;
  for (int i = 0; i < 4; ++i)
    text += "{\"sample_id\":\"" + std::to_string(i) + "\",\"problem\":\" Solve  x + 1 = 2 \",\"steps\":[{\"text\":\"x = 1\",\"rating\":1}]}\n";
  io::write_file(dir / "dup.jsonl", text);
  auto llm = llm::CallbackLlm([](const llm::CompletionRequest&) {
    llm::CompletionResponse r;
    r.text = R"({"branch":"Algebra","subfield":"Linear","problem_type":"One step","procedures":["Subtract 1."],"errors":[],"knowledge":[],"knowledge_attachment":[]})";
    return r;
  });
  auto result = build_graph(dir / "dup.jsonl", llm);
  CHECK(result.graph.ids_of(NodeKind::Problem).size() == 1);
  CHECK(result.report.duplicates == 3);
  CHECK(result.report.processed + result.report.rejected == 1);
}

TEST_CASE("build_graph: a model that never parses rejects every sample") {
  llm::CallbackLlm junk([](const llm::CompletionRequest&) {
    llm::CompletionResponse r;
    r.text = "I cannot do that.";
    return r;
  });
  auto result = build_graph(test::data("prm_fixture.jsonl"), junk, {.workers = 3});
  CHECK(result.report.processed == 0);
  CHECK(result.report.rejected == 10);
  CHECK(result.graph.node_count() == 0);
  REQUIRE(result.rejects.size() == 10);
  for (std::size_t i = 1; i < result.rejects.size(); ++i)
    CHECK(result.rejects[i - 1].sample_id < result.rejects[i].sample_id);
}
