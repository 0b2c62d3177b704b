#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <queue>
#include <set>
#include <sstream>

#include "hierwalk/hierarchy.hpp"
#include "hierwalk/rng.hpp"

using namespace hierwalk;

namespace {

bool group_connected(const Graph& g, const std::vector<NodeId>& members) {
  if (members.size() <= 1) return true;
  std::set<NodeId> in(members.begin(), members.end());
  std::set<NodeId> seen{members[0]};
  std::queue<NodeId> q;
  q.push(members[0]);
  while (!q.empty()) {
    NodeId u = q.front();
    q.pop();
    for (const Edge& e : g.neighbors(u))
      if (in.count(e.to) && !seen.count(e.to)) {
        seen.insert(e.to);
        q.push(e.to);
      }
  }
  return seen.size() == members.size();
}

bool level_connected(const HierarchicalGraph& hg, int level) {
  int size = hg.level_sizes[level];
  if (size <= 1) return true;
  NodeId base = hg.level_offsets[level];
  std::set<NodeId> seen{base};
  std::queue<NodeId> q;
  q.push(base);
  while (!q.empty()) {
    NodeId u = q.front();
    q.pop();
    for (const Edge& e : hg.graph.neighbors(u))
      if (e.attr.kind == EdgeKind::Horizontal && hg.level_of[e.to] == level && !seen.count(e.to)) {
        seen.insert(e.to);
        q.push(e.to);
      }
  }
  return static_cast<int>(seen.size()) == size;
}

void check_hierarchy_invariants(const Graph& g, const HierarchicalGraph& hg, const Mat& feats,
                                const Mat& lifted) {
  const int n = g.node_count();
  // single top node, exactly one parent elsewhere
  int tops = 0;
  for (NodeId v = 0; v < hg.total_nodes(); ++v) {
    if (hg.parent_of[v] == kNoNode) {
      ++tops;
      CHECK(hg.level_of[v] == hg.level_count - 1);
    } else {
      CHECK(hg.level_of[hg.parent_of[v]] == hg.level_of[v] + 1);
    }
  }
  CHECK(tops == 1);
  CHECK(hg.level_sizes[0] == n);
  CHECK(hg.total_nodes() <= 2 * n);

  // descendant sets at each level partition V_0
  for (int l = 0; l < hg.level_count; ++l) {
    std::vector<int> covered(n, 0);
    for (int i = 0; i < hg.level_sizes[l]; ++i)
      for (NodeId d : hg.descendants(hg.level_offsets[l] + i)) covered[d]++;
    for (int v = 0; v < n; ++v) CHECK(covered[v] == 1);
  }

  // virtual features are exact descendant means
  for (NodeId v = n; v < hg.total_nodes(); ++v) {
    auto desc = hg.descendants(v);
    Vec mean = Vec::Zero(feats.rows());
    for (NodeId d : desc) mean += feats.col(d);
    mean /= static_cast<double>(desc.size());
    CHECK((mean - lifted.col(v)).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  // connectivity preserved per level
  for (int l = 0; l < hg.level_count; ++l) CHECK(level_connected(hg, l));
}

}  // namespace

TEST_CASE("coarsen_once halves exactly") {
  Rng rng(5);
  Graph g16 = build_line_graph(16);
  CoarsenResult r = coarsen_once(g16, rng);
  CHECK(r.coarse.node_count() == 8);

  Graph g2 = build_line_graph(2);
  CoarsenResult r2 = coarsen_once(g2, rng);
  CHECK(r2.coarse.node_count() == 1);
  CHECK(r2.coarse.directed_edge_count() == 0);

  // On the 5-path, pair matching alone would leave three groups; singleton
  // absorption brings the level to floor(5/2) so the hierarchy stays within
  // the 2|V| size bound.
  Graph g5 = build_line_graph(5);
  for (int trial = 0; trial < 10; ++trial) {
    CoarsenResult r5 = coarsen_once(g5, rng);
    CHECK(r5.coarse.node_count() == 2);
  }

  GraphBuilder lonely(1);
  Graph single = lonely.build();
  CHECK_THROWS_AS(coarsen_once(single, rng), std::invalid_argument);
}

TEST_CASE("coarse groups are connected and coarse edges mirror child adjacency") {
  Rng rng(11);
  for (int trial = 0; trial < 15; ++trial) {
    int n = 3 + rng.next_index(30);
    Graph g = random_connected_graph(n, rng.next_index(n), rng);
    CoarsenResult r = coarsen_once(g, rng);
    int groups = r.coarse.node_count();
    CHECK(groups == n / 2);
    std::vector<std::vector<NodeId>> members(groups);
    for (NodeId u = 0; u < n; ++u) members[r.assignment[u]].push_back(u);
    for (const auto& m : members) {
      CHECK(!m.empty());
      CHECK(group_connected(g, m));
    }
    // coarse edge iff some child pair is adjacent
    std::set<std::pair<NodeId, NodeId>> expect;
    for (NodeId u = 0; u < n; ++u)
      for (const Edge& e : g.neighbors(u))
        if (r.assignment[u] != r.assignment[e.to])
          expect.insert({r.assignment[u], r.assignment[e.to]});
    std::set<std::pair<NodeId, NodeId>> got;
    for (NodeId a = 0; a < groups; ++a)
      for (const Edge& e : r.coarse.neighbors(a)) got.insert({a, e.to});
    CHECK(got == expect);
  }
}

TEST_CASE("line-16 hierarchy has the expected shape") {
  Graph g = build_line_graph(16);
  Rng rng(1);
  Mat feats = Mat::Zero(2, 16);
  auto [hg, lifted] = build_hierarchy(g, feats, rng);
  CHECK(hg.level_sizes == std::vector<int>{16, 8, 4, 2, 1});
  CHECK(hg.level_count == 5);
  CHECK(hg.total_nodes() == 31);
  int up_edges = 0;
  for (NodeId u = 0; u < hg.total_nodes(); ++u)
    for (const Edge& e : hg.graph.neighbors(u))
      if (e.attr.kind == EdgeKind::Up) ++up_edges;
  CHECK(up_edges == 30);  // every non-top node has one parent
}

TEST_CASE("parent feature is the mean of its descendants") {
  Graph g = build_line_graph(2);
  Mat feats(1, 2);
  feats << 0.0, 1.0;
  Rng rng(3);
  auto [hg, lifted] = build_hierarchy(g, feats, rng);
  REQUIRE(hg.total_nodes() == 3);
  CHECK(lifted(0, 2) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("feature table size mismatch is rejected") {
  Graph g = build_line_graph(4);
  Rng rng(3);
  Mat feats = Mat::Zero(2, 3);
  CHECK_THROWS_AS(build_hierarchy(g, feats, rng), std::invalid_argument);
}

TEST_CASE("hierarchy invariants hold on random connected graphs") {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 2 + rng.next_index(63);
    Graph g = random_connected_graph(n, rng.next_index(n + 1), rng);
    Mat feats(2, n);
    for (int i = 0; i < n; ++i) {
      feats(0, i) = rng.next_double();
      feats(1, i) = rng.next_double();
    }
    auto [hg, lifted] = build_hierarchy(g, feats, rng);
    check_hierarchy_invariants(g, hg, feats, lifted);
  }
}

TEST_CASE("partition import") {
  Graph g = build_line_graph(4);
  {
    std::istringstream in("0 0\n1 0\n2 1\n3 1\n");
    auto assignment = import_partition(g, in);
    CoarsenResult r = apply_partition(g, assignment);
    CHECK(r.coarse.node_count() == 2);
    CHECK(r.coarse.directed_edge_count() == 2);  // one undirected coarse edge
  }
  {
    std::istringstream in("0 0\n1 0\n2 1\n");
    CHECK_THROWS_AS(import_partition(g, in), FormatError);
  }
  {
    std::istringstream in("0 0\n1 1\n2 2\n3 3\n");
    CHECK_THROWS_AS(import_partition(g, in), FormatError);  // no shrink
  }
  {
    std::istringstream in("0 0\n1 0\n2 2\n3 2\n");
    CHECK_THROWS_AS(import_partition(g, in), FormatError);  // gap in group ids
  }
  {
    Rng rng(4);
    std::vector<NodeId> assignment{0, 0, 1, 1};
    HierarchicalGraph hg = build_hierarchy_structure(g, rng, &assignment);
    CHECK(hg.level_sizes[1] == 2);
    CHECK(hg.parent_of[0] == hg.parent_of[1]);
    CHECK(hg.parent_of[2] == hg.parent_of[3]);
  }
}

TEST_CASE("hierarchy export lists edges and parents") {
  Graph g = build_line_graph(4);
  Rng rng(8);
  HierarchicalGraph hg = build_hierarchy_structure(g, rng);
  std::string text = hierarchy_to_text(hg);
  CHECK(text.find("nodes 7") == 0);
  int parent_lines = 0;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("parent ", 0) == 0) ++parent_lines;
  CHECK(parent_lines == hg.total_nodes() - 1);
}
