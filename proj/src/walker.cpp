#include "hierwalk/walker.hpp"

#include <cmath>
#include <ostream>
#include <thread>

namespace hierwalk {

const char* to_string(PolicyMode m) { return m == PolicyMode::Uniform ? "uniform" : "learned"; }

PolicyMode policy_mode_from_string(const std::string& s) {
  if (s == "uniform") return PolicyMode::Uniform;
  if (s == "learned") return PolicyMode::Learned;
  throw ConfigError("unknown policy '" + s + "'");
}

int edge_type_index(EdgeAttr attr) {
  switch (attr.kind) {
    case EdgeKind::Horizontal: return attr.level == 0 ? 0 : 1;
    case EdgeKind::Up: return 2;
    case EdgeKind::Down: return 3;
  }
  return 0;
}

StepCandidates admissible_neighbors(const Graph& g, NodeId u, NodeId prev) {
  auto nbrs = g.neighbors(u);
  if (nbrs.empty()) throw TopologyError("node " + std::to_string(u) + " has no neighbors");
  StepCandidates out;
  out.cands.reserve(nbrs.size());
  for (int j = 0; j < static_cast<int>(nbrs.size()); ++j)
    if (nbrs[j].to != prev)
      out.cands.push_back({nbrs[j].to, nbrs[j].attr, g.edge_index(u, j)});
  if (out.cands.empty()) {
    // Dead end: the only neighbor is prev, so backtracking is forced.
    for (int j = 0; j < static_cast<int>(nbrs.size()); ++j)
      if (nbrs[j].to == prev) {
        out.cands.push_back({nbrs[j].to, nbrs[j].attr, g.edge_index(u, j)});
        break;
      }
    out.forced_backtrack = true;
  }
  return out;
}

namespace {

double learned_logit(const WalkPolicy& policy, NodeId u, const TransitionCandidate& cand) {
  if (policy.edge_logits) return (*policy.edge_logits)(cand.edge_index);
  const Mat& h = *policy.embeddings;
  Vec in(2 * h.rows() + kEdgeTypeChannels);
  in.head(h.rows()) = h.col(u);
  in.segment(h.rows(), h.rows()) = h.col(cand.to);
  in.tail(kEdgeTypeChannels).setZero();
  in(2 * h.rows() + edge_type_index(cand.attr)) = 1.0;
  return mlp_eval(*policy.store, *policy.q, in)(0);
}

}  // namespace

TransitionDist transition_distribution(const Graph& g, const WalkPolicy& policy, NodeId u,
                                       NodeId prev) {
  StepCandidates step = admissible_neighbors(g, u, prev);
  TransitionDist dist;
  dist.cands = std::move(step.cands);
  const int m = static_cast<int>(dist.cands.size());
  dist.probs.resize(m);
  if (policy.mode == PolicyMode::Uniform) {
    dist.probs.setConstant(1.0 / m);
    return dist;
  }
  if (!policy.edge_logits && (!policy.store || !policy.q || !policy.embeddings))
    throw ConfigError("learned policy needs q parameters and embeddings");
  Vec logits(m);
  for (int i = 0; i < m; ++i) logits(i) = learned_logit(policy, u, dist.cands[i]);
  double mx = logits.maxCoeff();
  dist.probs = (logits.array() - mx).exp();
  dist.probs /= dist.probs.sum();
  return dist;
}

Walk sample_walk(const Graph& g, const WalkPolicy& policy, NodeId start, int walk_len, Rng& rng,
                 bool training) {
  if (walk_len < 1) throw std::invalid_argument("walk_len must be at least 1");
  if (start < 0 || start >= g.node_count()) throw std::out_of_range("walk start out of range");
  Walk walk;
  walk.nodes.reserve(walk_len);
  walk.nodes.push_back(start);
  NodeId prev = kNoNode;
  for (int step = 1; step < walk_len; ++step) {
    NodeId u = walk.nodes.back();
    TransitionDist dist = transition_distribution(g, policy, u, prev);
    const int m = static_cast<int>(dist.cands.size());
    int choice = 0;
    if (training) {
      // Gumbel perturbation of log-probabilities; the argmax is an exact
      // categorical sample and the softmax is recorded for gradient use.
      Vec z(m);
      for (int i = 0; i < m; ++i)
        z(i) = (std::log(dist.probs(i)) + rng.next_gumbel()) / policy.tau;
      z.maxCoeff(&choice);
      double mx = z.maxCoeff();
      Vec soft = (z.array() - mx).exp();
      soft /= soft.sum();
      walk.step_soft.push_back(std::move(soft));
    } else {
      double r = rng.next_double();
      double acc = 0.0;
      for (int i = 0; i < m; ++i) {
        acc += dist.probs(i);
        if (r < acc || i == m - 1) {
          choice = i;
          break;
        }
      }
    }
    prev = u;
    walk.nodes.push_back(dist.cands[choice].to);
    walk.edges.push_back(dist.cands[choice].attr);
  }
  return walk;
}

std::vector<std::vector<Walk>> sample_walk_set(const Graph& g, const WalkPolicy& policy,
                                               int n_origins, int k, int walk_len,
                                               std::uint64_t seed, int workers) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (n_origins < 1 || n_origins > g.node_count())
    throw std::invalid_argument("origin count out of range");
  std::vector<std::vector<Walk>> out(n_origins);
  auto run_range = [&](NodeId begin, NodeId end) {
    for (NodeId origin = begin; origin < end; ++origin) {
      out[origin].reserve(k);
      for (int j = 0; j < k; ++j) {
        Rng sub(mix_seed(seed, {static_cast<std::uint64_t>(origin), static_cast<std::uint64_t>(j)}));
        out[origin].push_back(sample_walk(g, policy, origin, walk_len, sub, false));
      }
    }
  };
  workers = std::max(1, std::min(workers, n_origins));
  if (workers == 1) {
    run_range(0, n_origins);
  } else {
    std::vector<std::thread> pool;
    int chunk = (n_origins + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      NodeId begin = w * chunk;
      NodeId end = std::min(n_origins, begin + chunk);
      if (begin < end) pool.emplace_back(run_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

void dump_walks(std::ostream& os, const std::vector<std::vector<Walk>>& walk_set) {
  for (std::size_t origin = 0; origin < walk_set.size(); ++origin)
    for (std::size_t j = 0; j < walk_set[origin].size(); ++j) {
      os << origin << " " << j;
      for (NodeId v : walk_set[origin][j].nodes) os << " " << v;
      os << "\n";
    }
}

}  // namespace hierwalk
