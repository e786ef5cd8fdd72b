#include "kgrar/mkg.hpp"

#include <algorithm>
#include <deque>
#include <unordered_set>

#include <json.hpp>

#include "kgrar/error.hpp"
#include "kgrar/io.hpp"
#include "kgrar/text.hpp"

namespace kgrar::mkg {

namespace {

constexpr std::array<std::string_view, kNodeKindCount> kKindNames = {
    "Branch", "Subfield", "ProblemType", "Problem", "Procedure", "Error", "Knowledge"};

constexpr std::array<std::string_view, kEdgeLabelCount> kLabelNames = {
    "HasSubfield", "HasType", "HasProblem", "HasProcedure", "NextProcedure", "HasError", "UsesKnowledge"};

std::size_t idx(NodeKind k) { return static_cast<std::size_t>(k); }

bool text_indexed(NodeKind k) { return is_taxonomy(k) || k == NodeKind::Knowledge; }

std::string id_str(NodeId id) { return std::to_string(id.value); }

}  // namespace

std::string_view to_string(NodeKind kind) noexcept { return kKindNames[idx(kind)]; }
std::string_view to_string(EdgeLabel label) noexcept { return kLabelNames[static_cast<std::size_t>(label)]; }

std::optional<NodeKind> parse_node_kind(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<NodeKind>(i);
  return std::nullopt;
}

std::optional<EdgeLabel> parse_edge_label(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i)
    if (kLabelNames[i] == s) return static_cast<EdgeLabel>(i);
  return std::nullopt;
}

bool legal_endpoints(EdgeLabel label, NodeKind src, NodeKind dst) noexcept {
  using K = NodeKind;
  switch (label) {
    case EdgeLabel::HasSubfield: return src == K::Branch && dst == K::Subfield;
    case EdgeLabel::HasType: return src == K::Subfield && dst == K::ProblemType;
    case EdgeLabel::HasProblem: return src == K::ProblemType && dst == K::Problem;
    case EdgeLabel::HasProcedure: return src == K::Problem && dst == K::Procedure;
    case EdgeLabel::NextProcedure: return src == K::Procedure && dst == K::Procedure;
    case EdgeLabel::HasError: return src == K::Problem && dst == K::Error;
    case EdgeLabel::UsesKnowledge: return (src == K::Procedure || src == K::Error) && dst == K::Knowledge;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Subgraph

bool Subgraph::contains(NodeId id) const noexcept { return find(id) != nullptr; }

const Node* Subgraph::find(NodeId id) const noexcept {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

std::vector<NodeId> Subgraph::ids_of(NodeKind kind) const {
  std::vector<NodeId> out;
  for (const auto& n : nodes)
    if (n.kind == kind) out.push_back(n.id);
  return out;
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

std::size_t KnowledgeGraph::slot(NodeId id) const {
  auto it = slot_of_.find(id.value);
  if (it == slot_of_.end()) throw Error(ErrorCode::UnknownNode, "node " + id_str(id));
  return it->second;
}

NodeId KnowledgeGraph::add_node(NodeKind kind, std::string_view text, Attrs attrs) {
  if (text::is_blank(text)) throw Error(ErrorCode::EmptyText, std::string(to_string(kind)) + " text is blank");
  if (is_taxonomy(kind)) {
    if (auto existing = find_by_text(kind, text)) return *existing;
  }
  Node node{NodeId{next_id_}, kind, std::string(text), std::move(attrs)};
  insert_with_id(std::move(node));
  return NodeId{next_id_ - 1};
}

void KnowledgeGraph::insert_with_id(Node node) {
  if (node.id.value < next_id_) throw Error(ErrorCode::InvalidArgument, "node id " + id_str(node.id) + " not fresh");
  if (text::is_blank(node.text)) throw Error(ErrorCode::EmptyText, "node " + id_str(node.id));
  if (text_indexed(node.kind)) {
    auto key = std::make_pair(node.kind, text::casefold(text::trim_view(node.text)));
    auto [it, inserted] = text_index_.emplace(std::move(key), node.id);
    if (!inserted && is_taxonomy(node.kind))
      throw Error(ErrorCode::InvalidArgument, "duplicate taxonomy node '" + node.text + "'");
  }
  next_id_ = node.id.value + 1;
  slot_of_.emplace(node.id.value, nodes_.size());
  by_kind_[idx(node.kind)].insert(node.id);
  nodes_.push_back(std::move(node));
  adjacency_.emplace_back();
}

void KnowledgeGraph::add_edge(NodeId src, NodeId dst, EdgeLabel label) {
  std::size_t s = slot(src);
  std::size_t d = slot(dst);
  if (!legal_endpoints(label, nodes_[s].kind, nodes_[d].kind)) {
    throw Error(ErrorCode::IllegalEndpoints, std::string(to_string(label)) + " cannot connect " +
                                                 std::string(to_string(nodes_[s].kind)) + " to " +
                                                 std::string(to_string(nodes_[d].kind)));
  }
  auto key = std::make_tuple(src.value, dst.value, static_cast<std::uint8_t>(label));
  if (!edge_set_.insert(key).second) return;
  adjacency_[s].out.push_back(edges_.size());
  adjacency_[d].in.push_back(edges_.size());
  edges_.push_back(Edge{src, dst, label});
}

bool KnowledgeGraph::contains(NodeId id) const noexcept { return slot_of_.contains(id.value); }

const Node& KnowledgeGraph::node(NodeId id) const { return nodes_[slot(id)]; }

const Node* KnowledgeGraph::find(NodeId id) const noexcept {
  auto it = slot_of_.find(id.value);
  return it == slot_of_.end() ? nullptr : &nodes_[it->second];
}

std::optional<NodeId> KnowledgeGraph::find_by_text(NodeKind kind, std::string_view text) const {
  if (!text_indexed(kind)) return std::nullopt;
  auto it = text_index_.find(std::make_pair(kind, text::casefold(text::trim_view(text))));
  if (it == text_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const std::size_t> KnowledgeGraph::out_edge_indices(NodeId id) const { return adjacency_[slot(id)].out; }
std::span<const std::size_t> KnowledgeGraph::in_edge_indices(NodeId id) const { return adjacency_[slot(id)].in; }

std::vector<Neighbor> KnowledgeGraph::neighbors(NodeId id, Direction dir,
                                                std::span<const EdgeLabel> label_filter) const {
  const auto& adj = adjacency_[slot(id)];
  const auto& list = dir == Direction::Out ? adj.out : adj.in;
  std::vector<Neighbor> out;
  for (std::size_t e : list) {
    const Edge& edge = edges_[e];
    if (!label_filter.empty() &&
        std::find(label_filter.begin(), label_filter.end(), edge.label) == label_filter.end())
      continue;
    NodeId far = dir == Direction::Out ? edge.dst : edge.src;
    out.push_back(Neighbor{edge, &nodes_[slot_of_.at(far.value)]});
  }
  return out;
}

const std::set<NodeId>& KnowledgeGraph::ids_of(NodeKind kind) const noexcept { return by_kind_[idx(kind)]; }

GraphStats KnowledgeGraph::stats() const {
  GraphStats s;
  s.node_count = nodes_.size();
  s.edge_count = edges_.size();
  for (std::size_t k = 0; k < kNodeKindCount; ++k) s.per_kind[k] = by_kind_[k].size();
  return s;
}

std::optional<std::string> KnowledgeGraph::validate() const {
  if (nodes_.size() != adjacency_.size() || nodes_.size() != slot_of_.size())
    return "node storage sizes disagree";
  std::size_t indexed = 0;
  for (std::size_t k = 0; k < kNodeKindCount; ++k) {
    indexed += by_kind_[k].size();
    for (NodeId id : by_kind_[k]) {
      const Node* n = find(id);
      if (!n) return "kind index holds unknown node " + id_str(id);
      if (idx(n->kind) != k) return "kind index misfiles node " + id_str(id);
    }
  }
  if (indexed != nodes_.size()) return "kind index does not partition the node set";
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (text::is_blank(nodes_[i].text)) return "blank text on node " + id_str(nodes_[i].id);
    if (i > 0 && !(nodes_[i - 1].id < nodes_[i].id)) return "node ids not ascending";
  }
  std::size_t out_total = 0;
  std::size_t in_total = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (std::size_t e : adjacency_[i].out) {
      if (e >= edges_.size() || edges_[e].src != nodes_[i].id) return "out adjacency mismatch at " + id_str(nodes_[i].id);
    }
    for (std::size_t e : adjacency_[i].in) {
      if (e >= edges_.size() || edges_[e].dst != nodes_[i].id) return "in adjacency mismatch at " + id_str(nodes_[i].id);
    }
    out_total += adjacency_[i].out.size();
    in_total += adjacency_[i].in.size();
  }
  if (out_total != edges_.size() || in_total != edges_.size()) return "adjacency lists do not cover the edge list";
  for (const Edge& e : edges_) {
    const Node* s = find(e.src);
    const Node* d = find(e.dst);
    if (!s || !d) return "dangling edge " + id_str(e.src) + "->" + id_str(e.dst);
    if (!legal_endpoints(e.label, s->kind, d->kind)) return "illegal edge " + id_str(e.src) + "->" + id_str(e.dst);
  }
  if (edge_set_.size() != edges_.size()) return "duplicate edges present";
  std::set<std::pair<NodeKind, std::string>> seen;
  for (const Node& n : nodes_) {
    if (!is_taxonomy(n.kind)) continue;
    if (!seen.emplace(n.kind, text::casefold(text::trim_view(n.text))).second)
      return "taxonomy text repeated: " + n.text;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Traversals

namespace {

Subgraph assemble(const KnowledgeGraph& graph, NodeId root, const std::vector<NodeId>& order) {
  Subgraph sg;
  sg.root = root;
  std::unordered_set<NodeId> members(order.begin(), order.end());
  sg.nodes.reserve(order.size());
  for (NodeId id : order) sg.nodes.push_back(graph.node(id));
  std::vector<std::size_t> edge_ids;
  for (NodeId id : order) {
    for (std::size_t e : graph.out_edge_indices(id))
      if (members.contains(graph.edges()[e].dst)) edge_ids.push_back(e);
  }
  std::sort(edge_ids.begin(), edge_ids.end());
  for (std::size_t e : edge_ids) sg.edges.push_back(graph.edges()[e]);
  return sg;
}

bool dfs_keeps(NodeKind k) {
  return k == NodeKind::Procedure || k == NodeKind::Error || k == NodeKind::Knowledge;
}

}  // namespace

Subgraph dfs_context(const KnowledgeGraph& graph, NodeId root, std::size_t max_depth) {
  const Node& r = graph.node(root);
  if (r.kind != NodeKind::Problem)
    throw Error(ErrorCode::WrongKind, "dfs_context expects a Problem root, got " + std::string(to_string(r.kind)));

  struct Frame {
    NodeId id;
    std::size_t depth;
    std::size_t cursor;
  };
  // A node first reached through a long path is re-expanded when a shorter
  // path turns up, so membership means "within max_depth hops".
  std::unordered_map<NodeId, std::size_t> best{{root, 0}};
  std::vector<NodeId> order{root};
  std::vector<Frame> stack{{root, 0, 0}};
  while (!stack.empty()) {
    Frame& top = stack.back();
    auto outs = graph.out_edge_indices(top.id);
    if (top.cursor == outs.size() || top.depth == max_depth) {
      stack.pop_back();
      continue;
    }
    const Edge& e = graph.edges()[outs[top.cursor++]];
    std::size_t next_depth = top.depth + 1;
    auto it = best.find(e.dst);
    if (it == best.end()) {
      best.emplace(e.dst, next_depth);
      order.push_back(e.dst);
    } else if (next_depth < it->second) {
      it->second = next_depth;
    } else {
      continue;
    }
    stack.push_back(Frame{e.dst, next_depth, 0});
  }

  std::vector<NodeId> kept;
  kept.reserve(order.size());
  for (NodeId id : order)
    if (id == root || dfs_keeps(graph.node(id).kind)) kept.push_back(id);
  return assemble(graph, root, kept);
}

Subgraph bfs_context(const KnowledgeGraph& graph, NodeId root, std::size_t max_depth) {
  const Node& r = graph.node(root);
  if (r.kind != NodeKind::Procedure && r.kind != NodeKind::Error)
    throw Error(ErrorCode::WrongKind,
                "bfs_context expects a Procedure or Error root, got " + std::string(to_string(r.kind)));

  std::unordered_map<NodeId, std::size_t> depth{{root, 0}};
  std::vector<NodeId> order{root};
  std::deque<NodeId> queue{root};
  auto visit = [&](NodeId from, NodeId to) {
    if (depth.contains(to) || is_taxonomy(graph.node(to).kind)) return;
    depth.emplace(to, depth.at(from) + 1);
    order.push_back(to);
    queue.push_back(to);
  };
  while (!queue.empty()) {
    NodeId cur = queue.front();
    queue.pop_front();
    if (depth.at(cur) == max_depth) continue;
    for (std::size_t e : graph.out_edge_indices(cur)) visit(cur, graph.edges()[e].dst);
    for (std::size_t e : graph.in_edge_indices(cur)) visit(cur, graph.edges()[e].src);
  }
  return assemble(graph, root, order);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

using ojson = nlohmann::ordered_json;

[[noreturn]] void violation(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::FormatViolation, "line " + std::to_string(line) + ": " + what);
}

std::uint64_t require_uint(const nlohmann::json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) violation(line, std::string("missing unsigned '") + key + "'");
  return j[key].get<std::uint64_t>();
}

std::string require_string(const nlohmann::json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_string()) violation(line, std::string("missing string '") + key + "'");
  return j[key].get<std::string>();
}

}  // namespace

std::string serialize(const KnowledgeGraph& graph) {
  std::string out;
  ojson header;
  header["format"] = "mkg";
  header["version"] = 1;
  header["node_count"] = graph.node_count();
  header["edge_count"] = graph.edge_count();
  out += header.dump();
  out += '\n';
  for (const Node& n : graph.nodes()) {
    ojson rec;
    rec["id"] = n.id.value;
    rec["kind"] = to_string(n.kind);
    rec["text"] = n.text;
    rec["attrs"] = ojson::object();
    for (const auto& [k, v] : n.attrs) rec["attrs"][k] = v;
    out += rec.dump();
    out += '\n';
  }
  for (const Edge& e : graph.edges()) {
    ojson rec;
    rec["src"] = e.src.value;
    rec["dst"] = e.dst.value;
    rec["label"] = to_string(e.label);
    out += rec.dump();
    out += '\n';
  }
  return out;
}

KnowledgeGraph deserialize(std::string_view contents) {
  auto lines = io::split_lines(contents);
  if (lines.empty()) violation(1, "missing header");

  auto parse_line = [&](std::size_t i) {
    auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded() || !j.is_object()) violation(i + 1, "not a structured record");
    return j;
  };

  auto header = parse_line(0);
  if (require_string(header, "format", 1) != "mkg") violation(1, "format is not 'mkg'");
  if (require_uint(header, "version", 1) != 1) violation(1, "unsupported version");
  std::uint64_t node_count = require_uint(header, "node_count", 1);
  std::uint64_t edge_count = require_uint(header, "edge_count", 1);

  std::size_t expected = 1 + node_count + edge_count;
  if (lines.size() < expected) violation(lines.size() + 1, "truncated: expected " + std::to_string(expected) + " records");
  for (std::size_t i = expected; i < lines.size(); ++i)
    if (!text::is_blank(lines[i])) violation(i + 1, "unexpected trailing record");

  KnowledgeGraph g;
  for (std::size_t i = 1; i <= node_count; ++i) {
    auto j = parse_line(i);
    Node n;
    n.id = NodeId{require_uint(j, "id", i + 1)};
    auto kind = parse_node_kind(require_string(j, "kind", i + 1));
    if (!kind) violation(i + 1, "unknown node kind");
    n.kind = *kind;
    n.text = require_string(j, "text", i + 1);
    if (j.contains("attrs")) {
      if (!j["attrs"].is_object()) violation(i + 1, "attrs must be an object");
      for (const auto& [k, v] : j["attrs"].items()) {
        if (!v.is_string()) violation(i + 1, "attr '" + k + "' must be a string");
        n.attrs.emplace(k, v.get<std::string>());
      }
    }
    try {
      g.insert_with_id(std::move(n));
    } catch (const Error& e) {
      violation(i + 1, e.what());
    }
  }
  for (std::size_t i = 1 + node_count; i < expected; ++i) {
    auto j = parse_line(i);
    NodeId src{require_uint(j, "src", i + 1)};
    NodeId dst{require_uint(j, "dst", i + 1)};
    auto label = parse_edge_label(require_string(j, "label", i + 1));
    if (!label) violation(i + 1, "unknown edge label");
    std::size_t before = g.edge_count();
    try {
      g.add_edge(src, dst, *label);
    } catch (const Error& e) {
      violation(i + 1, e.what());
    }
    if (g.edge_count() == before) violation(i + 1, "duplicate edge");
  }
  return g;
}

void save(const KnowledgeGraph& graph, const std::filesystem::path& path) { io::write_file(path, serialize(graph)); }

KnowledgeGraph load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

}  // namespace kgrar::mkg
