#include "hierwalk/prefixsum.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace hierwalk {

std::vector<std::uint8_t> prefix_parity(const std::vector<std::uint8_t>& bits) {
  std::vector<std::uint8_t> labels(bits.size());
  int acc = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    acc ^= bits[i];
    labels[i] = static_cast<std::uint8_t>(acc);
  }
  return labels;
}

PrefixSumInstance generate_instance(int n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("prefixsum instance needs n >= 2");
  PrefixSumInstance inst;
  inst.n = n;
  inst.bits.resize(n);
  for (int i = 0; i < n; ++i) inst.bits[i] = rng.next_double() < 0.5 ? 0 : 1;
  inst.labels = prefix_parity(inst.bits);
  return inst;
}

namespace {

void split_by_position(std::vector<PrefixSumInstance> all, DatasetSplit& ds) {
  const int count = static_cast<int>(all.size());
  const int val = count / 10;
  const int test = count / 10;
  const int train = count - val - test;
  ds.train.assign(all.begin(), all.begin() + train);
  ds.val.assign(all.begin() + train, all.begin() + train + val);
  ds.test.assign(all.begin() + train + val, all.end());
}

}  // namespace

DatasetSplit generate_dataset(int n, int count, std::uint64_t seed) {
  if (count < 10) throw std::invalid_argument("dataset needs at least 10 instances");
  Rng rng(mix_seed(seed, {hash_str("prefixsum-data")}));
  std::vector<PrefixSumInstance> all;
  all.reserve(count);
  for (int i = 0; i < count; ++i) all.push_back(generate_instance(n, rng));
  DatasetSplit ds;
  ds.n = n;
  ds.seed = seed;
  split_by_position(std::move(all), ds);
  return ds;
}

void save_dataset(const DatasetSplit& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os << "prefixsum " << ds.n << " " << ds.total() << " " << ds.seed << "\n";
  auto write = [&](const std::vector<PrefixSumInstance>& part) {
    for (const auto& inst : part) {
      for (int i = 0; i < inst.n; ++i) os << char('0' + inst.bits[i]);
      os << "\n";
    }
  };
  write(ds.train);
  write(ds.val);
  write(ds.test);
}

DatasetSplit load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + ": empty dataset file");
  std::istringstream header(line);
  std::string tag;
  int n = 0, count = 0;
  std::uint64_t seed = 0;
  if (!(header >> tag >> n >> count >> seed) || tag != "prefixsum")
    throw FormatError(path + ":1: expected 'prefixsum n count seed'");
  std::vector<PrefixSumInstance> all;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (static_cast<int>(line.size()) != n)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(n) +
                        " bits");
    PrefixSumInstance inst;
    inst.n = n;
    inst.bits.resize(n);
    for (int i = 0; i < n; ++i) {
      if (line[i] != '0' && line[i] != '1')
        throw FormatError(path + ":" + std::to_string(line_no) + ": invalid bit '" + line[i] + "'");
      inst.bits[i] = static_cast<std::uint8_t>(line[i] - '0');
    }
    inst.labels = prefix_parity(inst.bits);
    all.push_back(std::move(inst));
  }
  if (static_cast<int>(all.size()) != count)
    throw FormatError(path + ": header says " + std::to_string(count) + " instances, found " +
                      std::to_string(all.size()));
  DatasetSplit ds;
  ds.n = n;
  ds.seed = seed;
  split_by_position(std::move(all), ds);
  return ds;
}

double accuracy_bound(int walk_len, int n) {
  if (n < 1) throw std::invalid_argument("accuracy_bound needs n >= 1");
  if (walk_len < 0 || walk_len > n)
    throw std::invalid_argument("accuracy_bound stated for 0 <= walk_len <= n");
  return 0.5 + static_cast<double>(walk_len) / (2.0 * n);
}

namespace {

// Walk-outcome enumeration: the distribution over visited-node sets of one
// uniform non-backtracking walk. Probabilities are exact products of 1/m.
void enumerate_visits(const Graph& g, NodeId node, NodeId prev, int steps_left, double prob,
                      std::uint64_t visited, std::map<std::uint64_t, double>& out) {
  if (steps_left == 0) {
    out[visited] += prob;
    return;
  }
  auto nbrs = g.neighbors(node);
  std::vector<NodeId> cands;
  for (const Edge& e : nbrs)
    if (e.to != prev) cands.push_back(e.to);
  if (cands.empty()) {
    if (prev == kNoNode) throw TopologyError("isolated node in oracle walk");
    cands.push_back(prev);  // dead end: forced backtrack
  }
  double p = prob / static_cast<double>(cands.size());
  for (NodeId v : cands)
    enumerate_visits(g, v, node, steps_left - 1, p, visited | (1ULL << v), out);
}

double oracle_impl(const Graph& walk_graph, int n0, const std::vector<std::uint32_t>& desc_mask,
                   int walk_len) {
  if (n0 > 6) throw std::invalid_argument("exhaustive oracle limited to n <= 6");
  if (walk_len < 1) throw std::invalid_argument("oracle needs walk_len >= 1");
  const int assignments = 1 << n0;

  // Per assignment and hierarchy node: descendant bit sum.
  std::vector<std::vector<int>> desc_sum(assignments,
                                         std::vector<int>(walk_graph.node_count(), 0));
  for (int x = 0; x < assignments; ++x)
    for (NodeId v = 0; v < walk_graph.node_count(); ++v)
      desc_sum[x][v] = __builtin_popcount(static_cast<std::uint32_t>(x) & desc_mask[v]);

  double total_acc = 0.0;
  for (NodeId origin = 0; origin < n0; ++origin) {
    std::map<std::uint64_t, double> visit_sets;
    enumerate_visits(walk_graph, origin, kNoNode, walk_len - 1, 1.0, 1ULL << origin, visit_sets);

    const std::uint32_t prefix = (1u << (origin + 1)) - 1;
    double node_acc = 0.0;
    for (const auto& [mask, prob] : visit_sets) {
      std::vector<NodeId> seen;
      for (NodeId v = 0; v < walk_graph.node_count(); ++v)
        if (mask & (1ULL << v)) seen.push_back(v);
      // Group assignments by what the walk observed; Bayes-optimal prediction
      // is the majority label within each group.
      std::map<std::uint64_t, std::pair<int, int>> groups;
      for (int x = 0; x < assignments; ++x) {
        std::uint64_t key = 0;
        for (NodeId v : seen) key = key * 7 + static_cast<std::uint64_t>(desc_sum[x][v]);
        int label = __builtin_popcount(static_cast<std::uint32_t>(x) & prefix) & 1;
        if (label)
          groups[key].second++;
        else
          groups[key].first++;
      }
      double correct = 0.0;
      for (const auto& [key, counts] : groups) correct += std::max(counts.first, counts.second);
      node_acc += prob * correct / assignments;
    }
    total_acc += node_acc;
  }
  return total_acc / n0;
}

}  // namespace

double exhaustive_uniform_walk_accuracy(const Graph& g, int walk_len) {
  std::vector<std::uint32_t> desc(g.node_count());
  for (NodeId v = 0; v < g.node_count(); ++v) desc[v] = 1u << v;
  return oracle_impl(g, g.node_count(), desc, walk_len);
}

double exhaustive_uniform_walk_accuracy(const HierarchicalGraph& hg, int walk_len) {
  const int n0 = hg.level_sizes[0];
  std::vector<std::uint32_t> desc(hg.total_nodes(), 0);
  for (NodeId v = 0; v < hg.total_nodes(); ++v)
    for (NodeId d : hg.descendants(v)) desc[v] |= 1u << d;
  return oracle_impl(hg.graph, n0, desc, walk_len);
}

}  // namespace hierwalk
