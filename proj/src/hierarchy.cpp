#include "hierwalk/hierarchy.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace hierwalk {

std::vector<NodeId> HierarchicalGraph::descendants(NodeId v) const {
  std::vector<NodeId> out;
  std::vector<NodeId> stack{v};
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    if (level_of[u] == 0) {
      out.push_back(u);
      continue;
    }
    for (NodeId c : children_of[u]) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

CoarsenResult coarsen_once(const Graph& g, const std::vector<double>& edge_weight, Rng& rng) {
  const int n = g.node_count();
  if (n < 2) throw std::invalid_argument("coarsen_once needs at least two nodes");
  if (static_cast<int>(edge_weight.size()) != g.directed_edge_count())
    throw std::invalid_argument("edge weight table size mismatch");

  std::vector<NodeId> mate(n, kNoNode);
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());

  // Heavy-edge maximal matching: each node grabs an unmatched neighbor of
  // maximum weight, random among ties.
  for (NodeId u : order) {
    if (mate[u] != kNoNode) continue;
    double best_w = -1.0;
    std::vector<NodeId> best;
    auto nbrs = g.neighbors(u);
    for (int j = 0; j < static_cast<int>(nbrs.size()); ++j) {
      NodeId v = nbrs[j].to;
      if (mate[v] != kNoNode) continue;
      double w = edge_weight[g.edge_index(u, j)];
      if (w > best_w + 1e-12) {
        best_w = w;
        best.clear();
      }
      if (w >= best_w - 1e-12) best.push_back(v);
    }
    if (best.empty()) continue;
    NodeId v = best[rng.next_index(static_cast<int>(best.size()))];
    mate[u] = v;
    mate[v] = u;
  }

  // Group ids: matched pairs and singletons.
  std::vector<NodeId> assignment(n, kNoNode);
  int groups = 0;
  for (NodeId u = 0; u < n; ++u) {
    if (assignment[u] != kNoNode) continue;
    assignment[u] = groups;
    if (mate[u] != kNoNode) assignment[mate[u]] = groups;
    ++groups;
  }

  // Absorb singletons into an adjacent group until the level halves. This is
  // what keeps the whole hierarchy within 2|V| nodes.
  const int target = n / 2;
  std::vector<int> group_size(groups, 0);
  for (NodeId u = 0; u < n; ++u) group_size[assignment[u]]++;
  if (groups > target) {
    std::vector<NodeId> singles;
    for (NodeId u = 0; u < n; ++u)
      if (mate[u] == kNoNode) singles.push_back(u);
    std::shuffle(singles.begin(), singles.end(), rng.engine());
    for (NodeId u : singles) {
      if (groups <= target) break;
      if (group_size[assignment[u]] != 1) continue;  // already absorbed into
      NodeId best_group = kNoNode;
      for (const Edge& e : g.neighbors(u)) {
        NodeId gidx = assignment[e.to];
        if (gidx == assignment[u]) continue;
        if (best_group == kNoNode || group_size[gidx] < group_size[best_group] ||
            (group_size[gidx] == group_size[best_group] && gidx < best_group))
          best_group = gidx;
      }
      if (best_group == kNoNode) continue;  // isolated node
      group_size[best_group] += group_size[assignment[u]];
      group_size[assignment[u]] = 0;
      assignment[u] = best_group;
      --groups;
    }
    // Edgeless leftovers (disconnected inputs): pair arbitrarily so the
    // hierarchy still terminates in a single top node.
    if (groups > target) {
      std::vector<NodeId> reps;
      for (NodeId u = 0; u < n; ++u)
        if (group_size[assignment[u]] == 1) reps.push_back(u);
      for (std::size_t i = 0; i + 1 < reps.size() && groups > target; i += 2) {
        group_size[assignment[reps[i]]] = 0;
        assignment[reps[i]] = assignment[reps[i + 1]];
        group_size[assignment[reps[i + 1]]]++;
        --groups;
      }
    }
  }

  // Renumber groups densely in order of smallest member.
  std::vector<NodeId> remap(group_size.size(), kNoNode);
  int next_id = 0;
  for (NodeId u = 0; u < n; ++u) {
    if (remap[assignment[u]] == kNoNode) remap[assignment[u]] = next_id++;
    assignment[u] = remap[assignment[u]];
  }

  CoarsenResult result;
  result.assignment = assignment;

  // Coarse edges: (A,B) present iff some child of A is adjacent to some child
  // of B. Weights accumulate child-edge multiplicity for heavy-edge matching
  // at the next level.
  std::map<std::pair<NodeId, NodeId>, double> wmap;
  for (NodeId u = 0; u < n; ++u) {
    auto nbrs = g.neighbors(u);
    for (int j = 0; j < static_cast<int>(nbrs.size()); ++j) {
      NodeId a = assignment[u];
      NodeId b = assignment[nbrs[j].to];
      if (a == b) continue;
      wmap[{a, b}] += edge_weight[g.edge_index(u, j)];
    }
  }
  GraphBuilder builder(next_id);
  for (const auto& [edge, w] : wmap) builder.add_directed(edge.first, edge.second, {EdgeKind::Horizontal, 0});
  result.coarse = builder.build();
  result.coarse_edge_weight.resize(result.coarse.directed_edge_count());
  for (NodeId a = 0; a < result.coarse.node_count(); ++a) {
    auto nbrs = result.coarse.neighbors(a);
    for (int j = 0; j < static_cast<int>(nbrs.size()); ++j)
      result.coarse_edge_weight[result.coarse.edge_index(a, j)] = wmap.at({a, nbrs[j].to});
  }
  return result;
}

CoarsenResult coarsen_once(const Graph& g, Rng& rng) {
  std::vector<double> unit(g.directed_edge_count(), 1.0);
  return coarsen_once(g, unit, rng);
}

CoarsenResult apply_partition(const Graph& g, const std::vector<NodeId>& assignment) {
  const int n = g.node_count();
  if (static_cast<int>(assignment.size()) != n)
    throw FormatError("partition covers " + std::to_string(assignment.size()) + " nodes, graph has " +
                      std::to_string(n));
  NodeId max_group = -1;
  for (NodeId a : assignment) max_group = std::max(max_group, a);
  int groups = max_group + 1;
  if (groups < 1) throw FormatError("partition has no groups");
  if (groups >= n) throw FormatError("partition must shrink the graph: " + std::to_string(groups) +
                                     " groups for " + std::to_string(n) + " nodes");
  std::vector<int> seen(groups, 0);
  for (NodeId a : assignment) {
    if (a < 0) throw FormatError("negative group id");
    seen[a] = 1;
  }
  for (int gidx = 0; gidx < groups; ++gidx)
    if (!seen[gidx]) throw FormatError("group ids not contiguous: missing group " + std::to_string(gidx));

  std::map<std::pair<NodeId, NodeId>, double> wmap;
  for (NodeId u = 0; u < n; ++u)
    for (const Edge& e : g.neighbors(u))
      if (assignment[u] != assignment[e.to]) wmap[{assignment[u], assignment[e.to]}] += 1.0;
  GraphBuilder builder(groups);
  for (const auto& [edge, w] : wmap) builder.add_directed(edge.first, edge.second, {EdgeKind::Horizontal, 0});
  CoarsenResult result;
  result.assignment = assignment;
  result.coarse = builder.build();
  result.coarse_edge_weight.resize(result.coarse.directed_edge_count());
  for (NodeId a = 0; a < result.coarse.node_count(); ++a) {
    auto nbrs = result.coarse.neighbors(a);
    for (int j = 0; j < static_cast<int>(nbrs.size()); ++j)
      result.coarse_edge_weight[result.coarse.edge_index(a, j)] = wmap.at({a, nbrs[j].to});
  }
  return result;
}

std::vector<NodeId> import_partition(const Graph& g, std::istream& in) {
  std::vector<NodeId> assignment(g.node_count(), kNoNode);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    NodeId node, group;
    if (!(ls >> node >> group))
      throw FormatError("line " + std::to_string(line_no) + ": expected 'node group'");
    if (node < 0 || node >= g.node_count())
      throw FormatError("line " + std::to_string(line_no) + ": node " + std::to_string(node) +
                        " out of range");
    if (assignment[node] != kNoNode)
      throw FormatError("line " + std::to_string(line_no) + ": duplicate node " + std::to_string(node));
    assignment[node] = group;
  }
  for (NodeId u = 0; u < g.node_count(); ++u)
    if (assignment[u] == kNoNode) throw FormatError("partition missing node " + std::to_string(u));
  apply_partition(g, assignment);  // validates group ids
  return assignment;
}

std::vector<NodeId> import_partition_file(const Graph& g, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open partition file '" + path + "'");
  return import_partition(g, is);
}

HierarchicalGraph build_hierarchy_structure(const Graph& g, Rng& rng,
                                            const std::vector<NodeId>* first_assignment) {
  if (g.node_count() < 1) throw std::invalid_argument("hierarchy needs a nonempty graph");

  std::vector<Graph> levels{g};
  std::vector<std::vector<NodeId>> assignments;  // per level l: node at l -> node at l+1
  std::vector<double> weights(g.directed_edge_count(), 1.0);
  while (levels.back().node_count() > 1) {
    CoarsenResult step;
    if (assignments.empty() && first_assignment != nullptr)
      step = apply_partition(levels.back(), *first_assignment);
    else
      step = coarsen_once(levels.back(), weights, rng);
    assignments.push_back(step.assignment);
    weights = step.coarse_edge_weight;
    levels.push_back(std::move(step.coarse));
  }

  HierarchicalGraph hg;
  hg.level_count = static_cast<int>(levels.size());
  hg.level_sizes.resize(hg.level_count);
  hg.level_offsets.assign(hg.level_count + 1, 0);
  for (int l = 0; l < hg.level_count; ++l) {
    hg.level_sizes[l] = levels[l].node_count();
    hg.level_offsets[l + 1] = hg.level_offsets[l] + hg.level_sizes[l];
  }
  const int total = hg.level_offsets.back();
  if (total > 2 * g.node_count())
    throw TopologyError("hierarchy size bound violated: " + std::to_string(total) + " > 2*" +
                        std::to_string(g.node_count()));

  GraphBuilder builder(total);
  for (int l = 0; l < hg.level_count; ++l) {
    int base = hg.level_offsets[l];
    const Graph& lg = levels[l];
    for (NodeId u = 0; u < lg.node_count(); ++u)
      for (const Edge& e : lg.neighbors(u))
        builder.add_directed(base + u, base + e.to, {EdgeKind::Horizontal, l});
  }
  hg.level_of.assign(total, 0);
  hg.parent_of.assign(total, kNoNode);
  hg.children_of.assign(total, {});
  for (int l = 0; l < hg.level_count; ++l)
    for (int i = 0; i < hg.level_sizes[l]; ++i) hg.level_of[hg.level_offsets[l] + i] = l;
  for (int l = 0; l + 1 < hg.level_count; ++l) {
    int base = hg.level_offsets[l];
    int parent_base = hg.level_offsets[l + 1];
    for (NodeId u = 0; u < hg.level_sizes[l]; ++u) {
      NodeId child = base + u;
      NodeId parent = parent_base + assignments[l][u];
      hg.parent_of[child] = parent;
      hg.children_of[parent].push_back(child);
      builder.add_parent_link(child, parent, l);
    }
  }
  hg.graph = builder.build();

  hg.descendant_count.assign(total, 0);
  for (int l = 0; l < hg.level_count; ++l) {
    for (int i = 0; i < hg.level_sizes[l]; ++i) {
      NodeId v = hg.level_offsets[l] + i;
      if (l == 0)
        hg.descendant_count[v] = 1;
      else
        for (NodeId c : hg.children_of[v]) hg.descendant_count[v] += hg.descendant_count[c];
    }
  }
  return hg;
}

Mat lift_features(const HierarchicalGraph& hg, const Mat& level0_features) {
  const int n0 = hg.level_sizes[0];
  if (level0_features.cols() != n0)
    throw std::invalid_argument("feature table covers " + std::to_string(level0_features.cols()) +
                                " nodes, level 0 has " + std::to_string(n0));
  Mat features(level0_features.rows(), hg.total_nodes());
  features.leftCols(n0) = level0_features;
  // Mean over level-0 descendants, computed incrementally via descendant
  // counts: sum(children sums) / count is exactly the descendant mean.
  Mat sums(level0_features.rows(), hg.total_nodes());
  sums.leftCols(n0) = level0_features;
  for (int l = 1; l < hg.level_count; ++l) {
    for (int i = 0; i < hg.level_sizes[l]; ++i) {
      NodeId v = hg.level_offsets[l] + i;
      sums.col(v).setZero();
      for (NodeId c : hg.children_of[v]) sums.col(v) += sums.col(c);
      features.col(v) = sums.col(v) / hg.descendant_count[v];
    }
  }
  return features;
}

std::pair<HierarchicalGraph, Mat> build_hierarchy(const Graph& g, const Mat& features, Rng& rng,
                                                  const std::vector<NodeId>* first_assignment) {
  if (features.cols() != g.node_count())
    throw std::invalid_argument("feature table size mismatch: " + std::to_string(features.cols()) +
                                " columns for " + std::to_string(g.node_count()) + " nodes");
  HierarchicalGraph hg = build_hierarchy_structure(g, rng, first_assignment);
  Mat lifted = lift_features(hg, features);
  return {std::move(hg), std::move(lifted)};
}

std::string hierarchy_to_text(const HierarchicalGraph& hg) {
  std::ostringstream os;
  os << hg.graph.to_text();
  for (NodeId u = 0; u < hg.total_nodes(); ++u)
    if (hg.parent_of[u] != kNoNode) os << "parent " << u << " " << hg.parent_of[u] << "\n";
  return os.str();
}

void save_hierarchy(const HierarchicalGraph& hg, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os << hierarchy_to_text(hg);
}

}  // namespace hierwalk
