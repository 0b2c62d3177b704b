#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hierwalk/graph.hpp"
#include "hierwalk/hierarchy.hpp"
#include "hierwalk/rng.hpp"

namespace hierwalk {

/// One benchmark instance: binary features on a line graph, per-node labels
/// equal to the parity of the prefix sum of bits.
struct PrefixSumInstance {
  int n = 0;
  std::vector<std::uint8_t> bits;
  std::vector<std::uint8_t> labels;
};

std::vector<std::uint8_t> prefix_parity(const std::vector<std::uint8_t>& bits);

PrefixSumInstance generate_instance(int n, Rng& rng);

struct DatasetSplit {
  int n = 0;
  std::uint64_t seed = 0;
  std::vector<PrefixSumInstance> train, val, test;

  int total() const { return static_cast<int>(train.size() + val.size() + test.size()); }
};

/// count instances split 80/10/10 by position, reproducible from the seed.
DatasetSplit generate_dataset(int n, int count, std::uint64_t seed);

void save_dataset(const DatasetSplit& ds, const std::string& path);
DatasetSplit load_dataset(const std::string& path);

/// Expected-accuracy ceiling 1/2 + walk_len/(2n) for models restricted to the
/// original topology.
double accuracy_bound(int walk_len, int n);

/// Exact expected accuracy of a Bayes-optimal predictor that observes, per
/// node, the set of (node, feature) pairs visited by one uniform
/// non-backtracking walk. Enumerates all walk outcomes and all 2^n feature
/// assignments; n must be at most 6.
double exhaustive_uniform_walk_accuracy(const Graph& g, int walk_len);
double exhaustive_uniform_walk_accuracy(const HierarchicalGraph& hg, int walk_len);

}  // namespace hierwalk
