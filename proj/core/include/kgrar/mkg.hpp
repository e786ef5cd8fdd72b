#pragma once

// Process-oriented math knowledge graph.
//
// Nodes are taxonomy entries (branch, subfield, problem type), problems, and
// the solution material hanging off a problem: procedures (correct steps),
// errors (incorrect steps) and knowledge items. Every edge label admits a
// single combination of endpoint kinds, see `legal_endpoints`.
//
// Persistence is a line-delimited text format:
//   {"format":"mkg","version":1,"node_count":N,"edge_count":E}
//   {"id":..,"kind":..,"text":..,"attrs":{..}}        x N
//   {"src":..,"dst":..,"label":..}                   x E

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kgrar::mkg {

struct NodeId {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

enum class NodeKind : std::uint8_t { Branch, Subfield, ProblemType, Problem, Procedure, Error, Knowledge };
inline constexpr std::size_t kNodeKindCount = 7;

enum class EdgeLabel : std::uint8_t {
  HasSubfield,
  HasType,
  HasProblem,
  HasProcedure,
  NextProcedure,
  HasError,
  UsesKnowledge,
};
inline constexpr std::size_t kEdgeLabelCount = 7;

std::string_view to_string(NodeKind kind) noexcept;
std::string_view to_string(EdgeLabel label) noexcept;
std::optional<NodeKind> parse_node_kind(std::string_view s) noexcept;
std::optional<EdgeLabel> parse_edge_label(std::string_view s) noexcept;

inline constexpr bool is_taxonomy(NodeKind k) noexcept {
  return k == NodeKind::Branch || k == NodeKind::Subfield || k == NodeKind::ProblemType;
}

// True when `label` may connect a `src`-kind node to a `dst`-kind node.
bool legal_endpoints(EdgeLabel label, NodeKind src, NodeKind dst) noexcept;

using Attrs = std::map<std::string, std::string>;

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::Problem;
  std::string text;
  Attrs attrs;

  friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
  NodeId src;
  NodeId dst;
  EdgeLabel label = EdgeLabel::HasProcedure;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class Direction { Out, In };

struct Neighbor {
  Edge edge;
  const Node* node = nullptr;  // far end
};

struct Subgraph {
  NodeId root;
  std::vector<Node> nodes;  // discovery order, root first
  std::vector<Edge> edges;  // induced edges, graph insertion order

  bool contains(NodeId id) const noexcept;
  const Node* find(NodeId id) const noexcept;
  std::vector<NodeId> ids_of(NodeKind kind) const;
};

struct GraphStats {
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  std::array<std::size_t, kNodeKindCount> per_kind{};

  std::size_t count(NodeKind k) const noexcept { return per_kind[static_cast<std::size_t>(k)]; }
  friend bool operator==(const GraphStats&, const GraphStats&) = default;
};

inline constexpr std::size_t kDefaultDfsDepth = 3;
inline constexpr std::size_t kDefaultBfsDepth = 2;

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Taxonomy kinds are upserted on case-folded text; other kinds always get a
  // fresh id. Throws EmptyText for blank text.
  NodeId add_node(NodeKind kind, std::string_view text, Attrs attrs = {});

  // Throws UnknownNode or IllegalEndpoints; duplicate triples are ignored.
  void add_edge(NodeId src, NodeId dst, EdgeLabel label);

  bool contains(NodeId id) const noexcept;
  const Node& node(NodeId id) const;  // throws UnknownNode
  const Node* find(NodeId id) const noexcept;

  // First node of `kind` whose case-folded text matches. Indexed for taxonomy
  // and knowledge kinds only; other kinds return nullopt.
  std::optional<NodeId> find_by_text(NodeKind kind, std::string_view text) const;

  std::vector<Neighbor> neighbors(NodeId id, Direction dir,
                                  std::span<const EdgeLabel> label_filter = {}) const;

  const std::set<NodeId>& ids_of(NodeKind kind) const noexcept;

  // All edges in insertion order.
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  // All nodes in ascending id order.
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  GraphStats stats() const;

  // Full consistency sweep; returns a description of the first violation.
  std::optional<std::string> validate() const;

  // Edge indices (into edges()) adjacent to a node, insertion order.
  std::span<const std::size_t> out_edge_indices(NodeId id) const;
  std::span<const std::size_t> in_edge_indices(NodeId id) const;

  // Used by the loader: insert a node under a caller-chosen id which must be
  // larger than every existing id.
  void insert_with_id(Node node);

 private:
  struct Adjacency {
    std::vector<std::size_t> out;
    std::vector<std::size_t> in;
  };

  std::size_t slot(NodeId id) const;  // throws UnknownNode

  std::vector<Node> nodes_;
  std::vector<Adjacency> adjacency_;
  std::unordered_map<std::uint64_t, std::size_t> slot_of_;
  std::vector<Edge> edges_;
  std::set<std::tuple<std::uint64_t, std::uint64_t, std::uint8_t>> edge_set_;
  std::array<std::set<NodeId>, kNodeKindCount> by_kind_;
  std::map<std::pair<NodeKind, std::string>, NodeId> text_index_;
  std::uint64_t next_id_ = 1;
};

// Depth-first walk over out-edges from a Problem node. Keeps every Procedure,
// Error and Knowledge node within `max_depth` hops, plus the root.
Subgraph dfs_context(const KnowledgeGraph& graph, NodeId root, std::size_t max_depth = kDefaultDfsDepth);

// Breadth-first walk over both edge directions from a Procedure or Error
// node. Taxonomy nodes are never entered, so the walk stays inside solution
// material: next steps, knowledge, the parent problem and its sibling errors.
Subgraph bfs_context(const KnowledgeGraph& graph, NodeId root, std::size_t max_depth = kDefaultBfsDepth);

std::string serialize(const KnowledgeGraph& graph);
KnowledgeGraph deserialize(std::string_view contents);

void save(const KnowledgeGraph& graph, const std::filesystem::path& path);
KnowledgeGraph load(const std::filesystem::path& path);

}  // namespace kgrar::mkg

template <>
struct std::hash<kgrar::mkg::NodeId> {
  std::size_t operator()(kgrar::mkg::NodeId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};
