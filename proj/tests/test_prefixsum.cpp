#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hierwalk/prefixsum.hpp"
#include "support.hpp"

using namespace hierwalk;

TEST_CASE("prefix parity label rule") {
  CHECK(prefix_parity({1, 0, 1, 1}) == std::vector<std::uint8_t>{1, 1, 0, 1});
  CHECK(prefix_parity({0, 0, 0, 0}) == std::vector<std::uint8_t>{0, 0, 0, 0});
  CHECK(prefix_parity({1, 1}) == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("generated instances satisfy the label rule") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    PrefixSumInstance inst = generate_instance(16, rng);
    CHECK(inst.labels == prefix_parity(inst.bits));
  }
  CHECK_THROWS_AS(generate_instance(1, rng), std::invalid_argument);
}

TEST_CASE("dataset split sizes and determinism") {
  DatasetSplit ds = generate_dataset(16, 1000, 42);
  CHECK(ds.train.size() == 800);
  CHECK(ds.val.size() == 100);
  CHECK(ds.test.size() == 100);

  DatasetSplit again = generate_dataset(16, 1000, 42);
  for (std::size_t i = 0; i < ds.train.size(); ++i)
    CHECK(ds.train[i].bits == again.train[i].bits);

  DatasetSplit tiny = generate_dataset(4, 10, 1);
  CHECK(tiny.train.size() == 8);
  CHECK(tiny.val.size() == 1);
  CHECK(tiny.test.size() == 1);

  CHECK_THROWS_AS(generate_dataset(4, 9, 1), std::invalid_argument);
}

TEST_CASE("dataset file round trip recomputes labels") {
  testing::TempDir tmp;
  auto path = (tmp.path / "data.txt").string();
  DatasetSplit ds = generate_dataset(8, 50, 7);
  save_dataset(ds, path);
  DatasetSplit back = load_dataset(path);
  CHECK(back.n == 8);
  CHECK(back.train.size() == ds.train.size());
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    CHECK(back.test[i].bits == ds.test[i].bits);
    CHECK(back.test[i].labels == ds.test[i].labels);
  }
}

TEST_CASE("accuracy bound") {
  CHECK(accuracy_bound(8, 16) == 0.75);
  CHECK(accuracy_bound(0, 16) == 0.5);
  CHECK(accuracy_bound(16, 16) == 1.0);
  CHECK_THROWS_AS(accuracy_bound(17, 16), std::invalid_argument);
  CHECK_THROWS_AS(accuracy_bound(-1, 16), std::invalid_argument);
}

TEST_CASE("oracle matches a direct Bayes computation at walk_len 1") {
  // With a single visited node, only node 0 ever knows its parity: accuracy
  // (1 + (n-1)/2) / n, which equals the bound at walk length 1.
  for (int n = 3; n <= 6; ++n) {
    Graph g = build_line_graph(n);
    double oracle = exhaustive_uniform_walk_accuracy(g, 1);
    double direct = (1.0 + 0.5 * (n - 1)) / n;
    CHECK(oracle == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("oracle dominance: never exceeds the bound on the original line") {
  for (int n = 3; n <= 6; ++n) {
    Graph g = build_line_graph(n);
    for (int walk_len = 1; walk_len <= n; ++walk_len) {
      double oracle = exhaustive_uniform_walk_accuracy(g, walk_len);
      CHECK(oracle <= accuracy_bound(walk_len, n) + 1e-12);
      CHECK(oracle >= 0.5 - 1e-12);
      CHECK(oracle <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("oracle on the hierarchical graph can beat the original-topology ceiling") {
  Graph g = build_line_graph(6);
  Rng rng(3);
  HierarchicalGraph hg = build_hierarchy_structure(g, rng);
  double hier = exhaustive_uniform_walk_accuracy(hg, 4);
  double line = exhaustive_uniform_walk_accuracy(g, 4);
  CHECK(hier <= 1.0 + 1e-12);
  CHECK(hier >= 0.5);
  // The hierarchical surface carries aggregate features, so even uniform
  // walks extract more than line walks of the same length.
  CHECK(hier > line - 1e-9);
}

TEST_CASE("oracle size guard") {
  Graph g = build_line_graph(7);
  CHECK_THROWS_AS(exhaustive_uniform_walk_accuracy(g, 3), std::invalid_argument);
}
