#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hierwalk/graph.hpp"
#include "hierwalk/rng.hpp"
#include "hierwalk/types.hpp"

namespace hierwalk {

/// Multi-level coarsened graph. Node ids are dense over all levels, level 0
/// first, each level a contiguous range. Every node except the single top
/// node has exactly one parent at the next level.
struct HierarchicalGraph {
  Graph graph;  // all levels, horizontal + up/down edges
  std::vector<int> level_of;
  std::vector<NodeId> parent_of;  // kNoNode for the top node
  std::vector<std::vector<NodeId>> children_of;
  std::vector<int> descendant_count;  // level-0 descendants per node
  int level_count = 0;
  std::vector<int> level_sizes;
  std::vector<int> level_offsets;  // id range of level l is [offset[l], offset[l+1])

  int total_nodes() const { return graph.node_count(); }
  NodeId top_node() const { return graph.node_count() - 1; }

  /// Level-0 descendant set of a node, ascending.
  std::vector<NodeId> descendants(NodeId v) const;
};

struct CoarsenResult {
  Graph coarse;
  std::vector<NodeId> assignment;         // original node -> coarse node
  std::vector<double> coarse_edge_weight;  // per directed coarse edge, merged multiplicity
};

/// One halving step: randomized maximal matching with heavy-edge preference,
/// then absorption of leftover singletons into an adjacent group until the
/// coarse level has floor(n/2) nodes. Groups stay connected in g.
CoarsenResult coarsen_once(const Graph& g, const std::vector<double>& edge_weight, Rng& rng);
CoarsenResult coarsen_once(const Graph& g, Rng& rng);

/// Applies an externally supplied partition (e.g. from METIS) as the first
/// coarsening step. Group ids must be dense 0..G-1 with G < node count.
CoarsenResult apply_partition(const Graph& g, const std::vector<NodeId>& assignment);

/// Parses `node group` lines into an assignment for g.
std::vector<NodeId> import_partition(const Graph& g, std::istream& in);
std::vector<NodeId> import_partition_file(const Graph& g, const std::string& path);

/// Coarsens repeatedly until a single top node. If first_assignment is
/// non-null it replaces the internal matching for the first step.
HierarchicalGraph build_hierarchy_structure(const Graph& g, Rng& rng,
                                            const std::vector<NodeId>* first_assignment = nullptr);

/// Extends level-0 feature columns to all hierarchy nodes: each virtual node
/// gets the mean feature of its level-0 descendants.
Mat lift_features(const HierarchicalGraph& hg, const Mat& level0_features);

/// Structure plus lifted features in one call.
std::pair<HierarchicalGraph, Mat> build_hierarchy(const Graph& g, const Mat& features, Rng& rng,
                                                  const std::vector<NodeId>* first_assignment = nullptr);

/// Graph edge format plus one `parent u p` line per child.
std::string hierarchy_to_text(const HierarchicalGraph& hg);
void save_hierarchy(const HierarchicalGraph& hg, const std::string& path);

}  // namespace hierwalk
