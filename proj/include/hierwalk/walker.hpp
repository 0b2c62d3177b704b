#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "hierwalk/graph.hpp"
#include "hierwalk/nn.hpp"
#include "hierwalk/rng.hpp"

namespace hierwalk {

enum class PolicyMode { Uniform, Learned };

const char* to_string(PolicyMode m);
PolicyMode policy_mode_from_string(const std::string& s);

/// One-hot channel of an edge for the transition head:
/// {horizontal level 0, horizontal coarse, up, down}.
int edge_type_index(EdgeAttr attr);
constexpr int kEdgeTypeChannels = 4;

/// Transition rule over a graph. Uniform mode needs nothing else; Learned
/// mode scores each admissible edge with q(h_u, h_v, edge type), either by
/// evaluating q directly or from a precomputed per-edge logit table.
struct WalkPolicy {
  PolicyMode mode = PolicyMode::Uniform;
  const ParamStore* store = nullptr;
  const MlpParams* q = nullptr;
  const Mat* embeddings = nullptr;   // d x node_count
  const Vec* edge_logits = nullptr;  // optional, indexed by Graph::edge_index
  double tau = 1.0;
};

struct TransitionCandidate {
  NodeId to = kNoNode;
  EdgeAttr attr;
  int edge_index = -1;
};

struct StepCandidates {
  std::vector<TransitionCandidate> cands;
  bool forced_backtrack = false;
};

/// Neighbors of u minus prev; prev is re-admitted when masking it would leave
/// nothing (dead ends). Isolated nodes are a topology error.
StepCandidates admissible_neighbors(const Graph& g, NodeId u, NodeId prev);

struct TransitionDist {
  std::vector<TransitionCandidate> cands;
  Vec probs;
};

TransitionDist transition_distribution(const Graph& g, const WalkPolicy& policy, NodeId u,
                                       NodeId prev = kNoNode);

/// Fixed-length node sequence with per-step edge attributes. step_soft holds
/// the per-step soft distributions when sampled in training mode.
struct Walk {
  std::vector<NodeId> nodes;
  std::vector<EdgeAttr> edges;
  std::vector<Vec> step_soft;
};

/// Non-backtracking walk of walk_len nodes starting at start. Training mode
/// samples via Gumbel perturbation and records the soft distributions;
/// evaluation samples categorically.
Walk sample_walk(const Graph& g, const WalkPolicy& policy, NodeId start, int walk_len, Rng& rng,
                 bool training = false);

/// k walks per origin node 0..n_origins-1, with per-(origin, walk) substreams
/// derived from the seed, so the result is independent of worker count and
/// scheduling order.
std::vector<std::vector<Walk>> sample_walk_set(const Graph& g, const WalkPolicy& policy,
                                               int n_origins, int k, int walk_len,
                                               std::uint64_t seed, int workers = 1);

/// Debug dump: one `origin walk_idx v0 v1 ...` line per walk.
void dump_walks(std::ostream& os, const std::vector<std::vector<Walk>>& walk_set);

}  // namespace hierwalk
