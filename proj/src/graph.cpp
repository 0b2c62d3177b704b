#include "hierwalk/graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace hierwalk {

const char* to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::Horizontal: return "horizontal";
    case EdgeKind::Up: return "up";
    case EdgeKind::Down: return "down";
  }
  return "?";
}

EdgeKind edge_kind_from_string(const std::string& s) {
  if (s == "horizontal") return EdgeKind::Horizontal;
  if (s == "up") return EdgeKind::Up;
  if (s == "down") return EdgeKind::Down;
  throw FormatError("unknown edge kind '" + s + "'");
}

std::span<const Edge> Graph::neighbors(NodeId u) const {
  if (u < 0 || u >= node_count_) {
    throw std::out_of_range("node id " + std::to_string(u) + " out of range [0, " +
                            std::to_string(node_count_) + ")");
  }
  return {edges_.data() + offsets_[u], static_cast<std::size_t>(offsets_[u + 1] - offsets_[u])};
}

int Graph::degree(NodeId u) const { return static_cast<int>(neighbors(u).size()); }

GraphBuilder::GraphBuilder(int node_count) : node_count_(node_count) {
  if (node_count < 1) throw std::invalid_argument("graph needs at least one node");
}

void GraphBuilder::add_directed(NodeId u, NodeId v, EdgeAttr attr) {
  if (u < 0 || u >= node_count_ || v < 0 || v >= node_count_)
    throw std::out_of_range("edge endpoint out of range");
  if (u == v) throw std::invalid_argument("self-loops are not allowed");
  pending_.push_back({{u, v}, attr});
}

void GraphBuilder::add_undirected(NodeId u, NodeId v, EdgeAttr attr) {
  add_directed(u, v, attr);
  add_directed(v, u, attr);
}

void GraphBuilder::add_parent_link(NodeId child, NodeId parent, int child_level) {
  add_directed(child, parent, {EdgeKind::Up, child_level});
  add_directed(parent, child, {EdgeKind::Down, child_level});
}

Graph GraphBuilder::build() {
  auto key = [](const std::pair<std::pair<NodeId, NodeId>, EdgeAttr>& e) {
    return std::make_tuple(e.first.first, e.first.second, e.second.kind, e.second.level);
  };
  std::sort(pending_.begin(), pending_.end(),
            [&](const auto& a, const auto& b) { return key(a) < key(b); });
  for (std::size_t i = 1; i < pending_.size(); ++i) {
    const auto& a = pending_[i - 1];
    const auto& b = pending_[i];
    if (a.first == b.first && a.second.kind == b.second.kind)
      throw std::invalid_argument("duplicate edge " + std::to_string(a.first.first) + "->" +
                                  std::to_string(a.first.second));
  }

  // Horizontal mirror and Up/Down pairing checks.
  std::set<std::tuple<NodeId, NodeId, EdgeKind, int>> edge_set;
  for (const auto& e : pending_)
    edge_set.insert({e.first.first, e.first.second, e.second.kind, e.second.level});
  for (const auto& e : pending_) {
    auto [u, v] = e.first;
    switch (e.second.kind) {
      case EdgeKind::Horizontal:
        if (!edge_set.count({v, u, EdgeKind::Horizontal, e.second.level}))
          throw std::invalid_argument("horizontal edge missing mirror");
        break;
      case EdgeKind::Up:
        if (!edge_set.count({v, u, EdgeKind::Down, e.second.level}))
          throw std::invalid_argument("up edge missing down mirror");
        break;
      case EdgeKind::Down:
        if (!edge_set.count({v, u, EdgeKind::Up, e.second.level}))
          throw std::invalid_argument("down edge missing up mirror");
        break;
    }
  }

  Graph g;
  g.node_count_ = node_count_;
  g.offsets_.assign(node_count_ + 1, 0);
  for (const auto& e : pending_) g.offsets_[e.first.first + 1]++;
  for (int u = 0; u < node_count_; ++u) g.offsets_[u + 1] += g.offsets_[u];
  g.edges_.resize(pending_.size());
  std::vector<int> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& e : pending_)
    g.edges_[cursor[e.first.first]++] = Edge{e.first.second, e.second};
  g.horizontal_symmetric_ = true;
  return g;
}

std::string Graph::to_text() const {
  std::ostringstream os;
  os << "nodes " << node_count_ << "\n";
  for (NodeId u = 0; u < node_count_; ++u)
    for (const Edge& e : neighbors(u))
      os << u << " " << e.to << " " << to_string(e.attr.kind) << " " << e.attr.level << "\n";
  return os.str();
}

Graph Graph::from_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line)) throw FormatError("empty graph text");
  ++line_no;
  std::istringstream header(line);
  std::string tag;
  int n = 0;
  if (!(header >> tag >> n) || tag != "nodes")
    throw FormatError("line 1: expected 'nodes <N>'");
  GraphBuilder builder(n);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    NodeId u, v;
    std::string kind;
    int level;
    if (!(ls >> u >> v >> kind >> level))
      throw FormatError("line " + std::to_string(line_no) + ": expected 'u v kind level'");
    builder.add_directed(u, v, {edge_kind_from_string(kind), level});
  }
  return builder.build();
}

void Graph::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os << to_text();
}

Graph Graph::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_text(buf.str());
}

Graph build_line_graph(int n) {
  if (n < 2) throw std::invalid_argument("line graph needs n >= 2");
  GraphBuilder builder(n);
  for (NodeId i = 0; i + 1 < n; ++i) builder.add_undirected(i, i + 1, {EdgeKind::Horizontal, 0});
  return builder.build();
}

Graph random_connected_graph(int n, int extra_edges, Rng& rng) {
  if (n < 2) throw std::invalid_argument("random connected graph needs n >= 2");
  std::set<std::pair<NodeId, NodeId>> used;
  GraphBuilder builder(n);
  for (NodeId v = 1; v < n; ++v) {
    NodeId u = rng.next_index(v);
    used.insert({std::min(u, v), std::max(u, v)});
  }
  int max_extra = n * (n - 1) / 2 - (n - 1);
  extra_edges = std::min(extra_edges, max_extra);
  while (extra_edges > 0) {
    NodeId u = rng.next_index(n);
    NodeId v = rng.next_index(n);
    if (u == v) continue;
    auto e = std::make_pair(std::min(u, v), std::max(u, v));
    if (used.count(e)) continue;
    used.insert(e);
    --extra_edges;
  }
  for (const auto& [u, v] : used) builder.add_undirected(u, v, {EdgeKind::Horizontal, 0});
  return builder.build();
}

}  // namespace hierwalk
