#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hierwalk/hierarchy.hpp"
#include "hierwalk/nn.hpp"
#include "hierwalk/tape.hpp"
#include "hierwalk/walker.hpp"

namespace hierwalk {

/// All learnable pieces of the pipeline: input projection, bottom-up deepset
/// maps, transition head, sequence encoder, walk aggregation map, classifier.
struct ModelParams {
  int d = 0;
  int in_dim = 0;
  int proj_w = -1, proj_b = -1;
  MlpParams phi_in, phi_out;
  MlpParams q;
  SeqEncoderParams enc;
  MlpParams phi_agg;
  MlpParams head;
};

ModelParams make_model_params(ParamStore& store, int d, int in_dim, Rng& rng);

/// Walk surface: the original graph alone, or the full hierarchical graph.
struct Topology {
  const Graph* walk_graph = nullptr;
  const HierarchicalGraph* hier = nullptr;  // null when walking the original graph
  int n0 = 0;                               // origin nodes (level 0)

  int total_nodes() const { return walk_graph->node_count(); }
};

Topology original_topology(const Graph& g);
Topology hierarchical_topology(const HierarchicalGraph& hg);

/// Bottom-up embeddings over all topology nodes. Columns are (node, instance)
/// pairs in node-major order: column v*batch + b. With no hierarchy this is
/// just the input projection; otherwise each level is a deepset pool over its
/// children's embeddings.
Var embed_hierarchy(Tape& t, ParamStore& store, const ModelParams& params, const Topology& topo,
                    Var features, int batch = 1);

/// Per-edge transition logits q(h_u, h_v, type) for every directed edge,
/// as a 1 x (E*batch) row in edge-major order.
Var edge_transition_logits(Tape& t, ParamStore& store, const ModelParams& params,
                           const Topology& topo, Var embeddings, int batch = 1);

/// Per-step encodings for a set of walks over shared embeddings; entry t is
/// d x n_walks with column j the step-t embedding of walks[j].
std::vector<Var> encode_walks(Tape& t, ParamStore& store, const ModelParams& params,
                              Var embeddings, const std::vector<Walk>& walks);

/// o_v = h_v + phi(mean of all step embeddings of all walks from v).
Var aggregate_origin(Tape& t, ParamStore& store, const ModelParams& params, Var h_v,
                     std::span<const Var> step_embeddings);

/// Mean two-class cross entropy over origin columns.
Var loss(Tape& t, Var logits, std::shared_ptr<const std::vector<int>> labels);

struct ModelConfig {
  int d = 32;
  int k = 10;
  int walk_len = 8;
  double tau = 1.0;
  PolicyMode policy = PolicyMode::Uniform;
};

enum class ForwardMode {
  TrainHard,  // Gumbel sampling, hard forward / soft backward
  GradSoft,   // frozen choices, soft mixtures end to end (gradient checks)
  Eval,       // categorical sampling, no gradient machinery
};

/// Frozen sampling decisions for one batched forward: per-walk node
/// sequences plus the padded per-step index/noise tables the tape consumes.
/// Walk columns are (origin*k + walk)*batch + instance.
struct WalkPlan {
  int n0 = 0, k = 0, walk_len = 0, batch = 0, max_deg = 0;
  std::vector<int> origin_cols;
  std::vector<std::shared_ptr<const Eigen::ArrayXXi>> cand_cols;     // per step 1..L-1
  std::vector<std::shared_ptr<const Eigen::ArrayXXi>> edge_entries;  // learned policy only
  std::vector<std::shared_ptr<const std::vector<int>>> chosen;
  std::vector<std::shared_ptr<const Mat>> noise;  // gumbel draws (training modes)
  std::vector<std::vector<std::vector<NodeId>>> nodes;  // [instance][origin][k*walk_len] flat

  NodeId node_at(int b, NodeId origin, int walk, int step) const {
    return nodes[b][origin][walk * walk_len + step];
  }
};

struct ForwardOptions {
  ForwardMode mode = ForwardMode::Eval;
  std::uint64_t walk_seed = 0;
  std::vector<std::uint64_t> instance_uids;  // one per batch column
  const WalkPlan* frozen = nullptr;
};

struct ForwardResult {
  Var loss;
  Mat logits;  // 2 x (n0*batch)
  int correct = 0;
  std::shared_ptr<WalkPlan> plan;
};

/// Full pipeline on a batch of instances sharing one topology: embeddings,
/// walk sampling, walk encoding, origin aggregation, classification, loss.
/// features is in_dim x (nodes*batch) node-major; labels n0*batch node-major.
ForwardResult forward_batch(Tape& t, ParamStore& store, const ModelParams& params,
                            const Topology& topo, const Mat& features,
                            const std::vector<int>& labels, const ModelConfig& cfg,
                            const ForwardOptions& opts);

/// Single-instance convenience wrapper.
ForwardResult forward(Tape& t, ParamStore& store, const ModelParams& params, const Topology& topo,
                      const Mat& features, const std::vector<int>& labels, const ModelConfig& cfg,
                      std::uint64_t seed, bool training);

}  // namespace hierwalk
