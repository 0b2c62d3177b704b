#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hierwalk/rng.hpp"
#include "hierwalk/types.hpp"

namespace hierwalk {

enum class EdgeKind : std::uint8_t { Horizontal, Up, Down };

const char* to_string(EdgeKind k);
EdgeKind edge_kind_from_string(const std::string& s);

/// Edge annotation: kind plus the hierarchy level of the edge's horizontal
/// layer (for Up/Down edges, the level of the child endpoint).
struct EdgeAttr {
  EdgeKind kind = EdgeKind::Horizontal;
  int level = 0;

  friend bool operator==(const EdgeAttr&, const EdgeAttr&) = default;
};

struct Edge {
  NodeId to = kNoNode;
  EdgeAttr attr;
};

/// Immutable adjacency structure. Edges carry their attributes inline in the
/// adjacency lists; lists are sorted by (neighbor, kind) so iteration order is
/// stable across runs. Horizontal edges always come mirrored, and every Up
/// edge has a matching Down edge.
class Graph {
 public:
  Graph() = default;

  int node_count() const { return node_count_; }
  int directed_edge_count() const { return static_cast<int>(edges_.size()); }

  std::span<const Edge> neighbors(NodeId u) const;
  int degree(NodeId u) const;

  /// Position of the j-th out-edge of u in the flat edge array. Used to index
  /// per-edge tables (transition logits).
  int edge_index(NodeId u, int j) const { return offsets_[u] + j; }
  const Edge& edge_at(int idx) const { return edges_[idx]; }

  bool horizontal_symmetric() const { return horizontal_symmetric_; }

  std::string to_text() const;
  static Graph from_text(const std::string& text);
  void save(const std::string& path) const;
  static Graph load(const std::string& path);

  friend class GraphBuilder;

 private:
  int node_count_ = 0;
  std::vector<int> offsets_;  // size node_count_+1
  std::vector<Edge> edges_;
  bool horizontal_symmetric_ = true;
};

/// Accumulates directed edges, then validates and freezes them into a Graph.
class GraphBuilder {
 public:
  explicit GraphBuilder(int node_count);

  void add_directed(NodeId u, NodeId v, EdgeAttr attr);
  /// Adds both directions of a horizontal edge (or any symmetric pair).
  void add_undirected(NodeId u, NodeId v, EdgeAttr attr);
  /// Adds the Up edge child->parent and its Down mirror.
  void add_parent_link(NodeId child, NodeId parent, int child_level);

  Graph build();

 private:
  int node_count_;
  std::vector<std::pair<std::pair<NodeId, NodeId>, EdgeAttr>> pending_;
};

/// Path graph 0-1-...-(n-1) with mirrored horizontal edges at level 0.
Graph build_line_graph(int n);

/// Random connected graph: a random attachment tree plus extra_edges
/// additional distinct edges. Level-0 horizontal topology.
Graph random_connected_graph(int n, int extra_edges, Rng& rng);

}  // namespace hierwalk
