#include "hierwalk/model.hpp"

#include <algorithm>
#include <cmath>

namespace hierwalk {

ModelParams make_model_params(ParamStore& store, int d, int in_dim, Rng& rng) {
  if (d < 1 || in_dim < 1) throw std::invalid_argument("model dims must be positive");
  ModelParams p;
  p.d = d;
  p.in_dim = in_dim;
  p.proj_w = store.add("proj.w", d, in_dim);
  double a = std::sqrt(1.0 / in_dim);
  Mat& w = store.at(p.proj_w).value;
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.next_double() - 1.0) * a;
  p.proj_b = store.add("proj.b", d, 1);
  Mat& pb = store.at(p.proj_b).value;
  for (Eigen::Index i = 0; i < pb.size(); ++i) pb.data()[i] = (2.0 * rng.next_double() - 1.0) * a;
  p.phi_in = make_mlp(store, "phi_in", {{d, d, d}}, rng);
  p.phi_out = make_mlp(store, "phi_out", {{2 * d, d, d}}, rng);
  p.q = make_mlp(store, "q", {{2 * d + kEdgeTypeChannels, d, 1}}, rng);
  p.enc = make_seq_encoder(store, "enc", d, rng);
  p.phi_agg = make_mlp(store, "phi_agg", {{d, d, d}}, rng);
  p.head = make_mlp(store, "head", {{d, d, 2}}, rng);
  return p;
}

Topology original_topology(const Graph& g) { return Topology{&g, nullptr, g.node_count()}; }

Topology hierarchical_topology(const HierarchicalGraph& hg) {
  return Topology{&hg.graph, &hg, hg.level_sizes[0]};
}

Var embed_hierarchy(Tape& t, ParamStore& store, const ModelParams& params, const Topology& topo,
                    Var features, int batch) {
  const Mat& fv = t.value(features);
  if (fv.rows() != params.in_dim) throw ShapeError("embed_hierarchy: feature row mismatch");
  if (fv.cols() != static_cast<Eigen::Index>(topo.total_nodes()) * batch)
    throw ShapeError("embed_hierarchy: feature column mismatch");
  Var projected = linear(t, store.at(params.proj_w), &store.at(params.proj_b), features);
  if (!topo.hier) return projected;

  const HierarchicalGraph& hg = *topo.hier;
  std::vector<Var> level_blocks;
  level_blocks.push_back(cols_block(t, projected, 0, hg.level_sizes[0] * batch));
  for (int l = 1; l < hg.level_count; ++l) {
    Var below = level_blocks.back();  // d x (size_{l-1} * batch)
    Var mapped = mlp_forward(t, store, params.phi_in, below);
    // Sum child columns into parent columns; children ids are local to the
    // level below.
    auto segs = std::make_shared<ColSegments>();
    segs->offsets.resize(static_cast<std::size_t>(hg.level_sizes[l]) * batch + 1, 0);
    for (int i = 0; i < hg.level_sizes[l]; ++i) {
      NodeId v = hg.level_offsets[l] + i;
      for (int b = 0; b < batch; ++b)
        segs->offsets[i * batch + b + 1] =
            static_cast<int>(hg.children_of[v].size());
    }
    for (std::size_t s = 1; s < segs->offsets.size(); ++s) segs->offsets[s] += segs->offsets[s - 1];
    segs->indices.resize(segs->offsets.back());
    {
      int at = 0;
      for (int i = 0; i < hg.level_sizes[l]; ++i) {
        NodeId v = hg.level_offsets[l] + i;
        // canonical child order keeps the sum bit-identical however the
        // children lists are permuted
        std::vector<NodeId> kids(hg.children_of[v]);
        std::sort(kids.begin(), kids.end());
        for (int b = 0; b < batch; ++b)
          for (NodeId c : kids) segs->indices[at++] = (c - hg.level_offsets[l - 1]) * batch + b;
      }
    }
    Var child_sum = segment_sum_cols(t, mapped, std::shared_ptr<const ColSegments>(segs));
    Var self = cols_block(t, projected, hg.level_offsets[l] * batch, hg.level_sizes[l] * batch);
    std::vector<Var> parts{self, child_sum};
    level_blocks.push_back(mlp_forward(t, store, params.phi_out, concat_rows(t, parts)));
  }
  return concat_cols(t, level_blocks);
}

Var edge_transition_logits(Tape& t, ParamStore& store, const ModelParams& params,
                           const Topology& topo, Var embeddings, int batch) {
  const Graph& g = *topo.walk_graph;
  const int E = g.directed_edge_count();
  auto u_cols = std::make_shared<std::vector<int>>();
  auto v_cols = std::make_shared<std::vector<int>>();
  u_cols->reserve(static_cast<std::size_t>(E) * batch);
  v_cols->reserve(static_cast<std::size_t>(E) * batch);
  Mat etype = Mat::Zero(kEdgeTypeChannels, static_cast<Eigen::Index>(E) * batch);
  for (NodeId u = 0; u < g.node_count(); ++u) {
    auto nbrs = g.neighbors(u);
    for (int j = 0; j < static_cast<int>(nbrs.size()); ++j) {
      int e = g.edge_index(u, j);
      for (int b = 0; b < batch; ++b) {
        u_cols->push_back(u * batch + b);
        v_cols->push_back(nbrs[j].to * batch + b);
        etype(edge_type_index(nbrs[j].attr), static_cast<Eigen::Index>(e) * batch + b) = 1.0;
      }
    }
  }
  Var hu = gather_cols(t, embeddings, std::shared_ptr<const std::vector<int>>(u_cols));
  Var hv = gather_cols(t, embeddings, std::shared_ptr<const std::vector<int>>(v_cols));
  Var types = t.leaf(std::move(etype));
  std::vector<Var> parts{hu, hv, types};
  return mlp_forward(t, store, params.q, concat_rows(t, parts));
}

namespace {

constexpr double kPadLogit = -1e300;

int max_degree(const Graph& g) {
  int m = 0;
  for (NodeId u = 0; u < g.node_count(); ++u) m = std::max(m, g.degree(u));
  return m;
}

/// Draws every walk of the batch, recording the padded per-step tables the
/// tape ops consume. Choices use the current embedding/logit values, so the
/// replayed tape nodes reproduce them exactly.
WalkPlan sample_plan(const Topology& topo, const ModelConfig& cfg, const ForwardOptions& opts,
                     const Mat* edge_logit_values, int batch) {
  const Graph& g = *topo.walk_graph;
  const bool learned = cfg.policy == PolicyMode::Learned;
  const bool training = opts.mode != ForwardMode::Eval;
  const int W = topo.n0 * cfg.k * batch;
  WalkPlan plan;
  plan.n0 = topo.n0;
  plan.k = cfg.k;
  plan.walk_len = cfg.walk_len;
  plan.batch = batch;
  plan.max_deg = max_degree(g);
  plan.origin_cols.resize(W);
  plan.nodes.assign(batch, std::vector<std::vector<NodeId>>(
                               topo.n0, std::vector<NodeId>(cfg.k * cfg.walk_len, kNoNode)));

  struct StepTables {
    Eigen::ArrayXXi cand, edges;
    std::vector<int> chosen;
    Mat noise;
  };
  std::vector<StepTables> steps(cfg.walk_len - 1);
  for (auto& st : steps) {
    st.cand = Eigen::ArrayXXi::Constant(plan.max_deg, W, -1);
    st.edges = Eigen::ArrayXXi::Constant(plan.max_deg, W, -1);
    st.chosen.assign(W, 0);
    if (training) st.noise = Mat::Zero(plan.max_deg, W);
  }

  for (int b = 0; b < batch; ++b) {
    std::uint64_t uid = opts.instance_uids.empty() ? static_cast<std::uint64_t>(b)
                                                   : opts.instance_uids[b];
    for (NodeId origin = 0; origin < topo.n0; ++origin) {
      for (int j = 0; j < cfg.k; ++j) {
        Rng rng(mix_seed(opts.walk_seed,
                         {uid, static_cast<std::uint64_t>(origin), static_cast<std::uint64_t>(j)}));
        const int w = (origin * cfg.k + j) * batch + b;
        plan.origin_cols[w] = origin * batch + b;
        plan.nodes[b][origin][j * cfg.walk_len] = origin;
        NodeId u = origin;
        NodeId prev = kNoNode;
        for (int step = 1; step < cfg.walk_len; ++step) {
          StepCandidates sc = admissible_neighbors(g, u, prev);
          const int m = static_cast<int>(sc.cands.size());
          StepTables& st = steps[step - 1];
          Vec logits(m);
          for (int i = 0; i < m; ++i) {
            st.cand(i, w) = sc.cands[i].to * batch + b;
            st.edges(i, w) = sc.cands[i].edge_index * batch + b;
            logits(i) = learned ? (*edge_logit_values)(0, st.edges(i, w))
                                : -std::log(static_cast<double>(m));
          }
          int choice = 0;
          if (training) {
            Vec z(m);
            for (int i = 0; i < m; ++i) {
              double noise = rng.next_gumbel();
              st.noise(i, w) = noise;
              z(i) = (logits(i) + noise) / cfg.tau;
            }
            z.maxCoeff(&choice);
          } else if (learned && m > 1) {
            double mx = logits.maxCoeff();
            Vec p = (logits.array() - mx).exp();
            p /= p.sum();
            double r = rng.next_double();
            double acc = 0.0;
            for (int i = 0; i < m; ++i) {
              acc += p(i);
              if (r < acc || i == m - 1) {
                choice = i;
                break;
              }
            }
          } else {
            choice = m > 1 ? rng.next_index(m) : 0;
          }
          st.chosen[w] = choice;
          prev = u;
          u = sc.cands[choice].to;
          plan.nodes[b][origin][j * cfg.walk_len + step] = u;
        }
      }
    }
  }

  for (auto& st : steps) {
    plan.cand_cols.push_back(std::make_shared<const Eigen::ArrayXXi>(std::move(st.cand)));
    plan.edge_entries.push_back(std::make_shared<const Eigen::ArrayXXi>(std::move(st.edges)));
    plan.chosen.push_back(std::make_shared<const std::vector<int>>(std::move(st.chosen)));
    if (training) plan.noise.push_back(std::make_shared<const Mat>(std::move(st.noise)));
  }
  return plan;
}

}  // namespace

std::vector<Var> encode_walks(Tape& t, ParamStore& store, const ModelParams& params,
                              Var embeddings, const std::vector<Walk>& walks) {
  if (walks.empty()) throw std::invalid_argument("encode_walks: no walks");
  const int L = static_cast<int>(walks[0].nodes.size());
  for (const Walk& w : walks)
    if (static_cast<int>(w.nodes.size()) != L)
      throw std::invalid_argument("encode_walks: walks must share length");
  std::vector<Var> inputs;
  inputs.reserve(L);
  for (int step = 0; step < L; ++step) {
    auto idx = std::make_shared<std::vector<int>>();
    idx->reserve(walks.size());
    for (const Walk& w : walks) idx->push_back(w.nodes[step]);
    inputs.push_back(gather_cols(t, embeddings, std::shared_ptr<const std::vector<int>>(idx)));
  }
  return seq_encode(t, store, params.enc, inputs);
}

Var aggregate_origin(Tape& t, ParamStore& store, const ModelParams& params, Var h_v,
                     std::span<const Var> step_embeddings) {
  if (step_embeddings.empty()) throw std::invalid_argument("aggregate_origin: no steps");
  Var all = concat_cols(t, step_embeddings);
  const int total = static_cast<int>(t.value(all).cols());
  auto segs = std::make_shared<ColSegments>();
  segs->offsets = {0, total};
  segs->indices.resize(total);
  for (int i = 0; i < total; ++i) segs->indices[i] = i;
  Var mean = scale(t, segment_sum_cols(t, all, segs), 1.0 / total);
  return add(t, h_v, mlp_forward(t, store, params.phi_agg, mean));
}

Var loss(Tape& t, Var logits, std::shared_ptr<const std::vector<int>> labels) {
  return softmax_ce_loss(t, logits, std::move(labels));
}

ForwardResult forward_batch(Tape& t, ParamStore& store, const ModelParams& params,
                            const Topology& topo, const Mat& features,
                            const std::vector<int>& labels, const ModelConfig& cfg,
                            const ForwardOptions& opts) {
  const int V = topo.total_nodes();
  if (features.cols() % V != 0) throw ShapeError("forward_batch: feature columns not node-major");
  const int batch = static_cast<int>(features.cols()) / V;
  if (static_cast<int>(labels.size()) != topo.n0 * batch)
    throw std::invalid_argument("forward_batch: one label per origin column required");
  const bool learned = cfg.policy == PolicyMode::Learned;
  const int L = cfg.walk_len;
  const int W = topo.n0 * cfg.k * batch;

  Var feats = t.leaf(features);
  Var H = embed_hierarchy(t, store, params, topo, feats, batch);
  Var elogits;
  if (learned) elogits = edge_transition_logits(t, store, params, topo, H, batch);

  std::shared_ptr<WalkPlan> plan;
  if (opts.frozen) {
    plan = std::make_shared<WalkPlan>(*opts.frozen);
  } else {
    plan = std::make_shared<WalkPlan>(
        sample_plan(topo, cfg, opts, learned ? &t.value(elogits) : nullptr, batch));
  }

  const bool soft_path = learned && opts.mode != ForwardMode::Eval;
  if (soft_path && plan->noise.size() + 1 < static_cast<std::size_t>(L))
    throw std::invalid_argument("frozen plan lacks gumbel noise for a training-mode forward");
  Var x_all;
  if (!soft_path) {
    // Every step input is a plain embedding lookup; one gather builds the
    // whole step-major input block.
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(L) * W);
    std::copy(plan->origin_cols.begin(), plan->origin_cols.end(), idx->begin());
    for (int step = 1; step < L; ++step) {
      const auto& cand = *plan->cand_cols[step - 1];
      const auto& chosen = *plan->chosen[step - 1];
      for (int w = 0; w < W; ++w) (*idx)[step * W + w] = cand(chosen[w], w);
    }
    x_all = gather_cols(t, H, std::shared_ptr<const std::vector<int>>(idx));
  } else {
    std::vector<Var> step_inputs;
    step_inputs.reserve(L);
    step_inputs.push_back(
        gather_cols(t, H, std::make_shared<const std::vector<int>>(plan->origin_cols)));
    for (int step = 1; step < L; ++step) {
      Var logits_t = gather_row_entries(t, elogits, plan->edge_entries[step - 1], kPadLogit);
      Var soft = softmax_cols(t, logits_t, plan->noise[step - 1], cfg.tau);
      step_inputs.push_back(select_cols(t, soft, H, plan->cand_cols[step - 1],
                                        plan->chosen[step - 1],
                                        opts.mode == ForwardMode::TrainHard));
    }
    x_all = concat_cols(t, step_inputs);
  }

  Var stacked = dual_linear(t, store.at(params.enc.w_gate), &store.at(params.enc.b_gate),
                            store.at(params.enc.w_cand), &store.at(params.enc.b_cand), x_all);
  Var states = gated_scan_stacked(t, stacked, L);

  // Mean over all k*L step states per origin; the output projection commutes
  // with the mean, so it is applied after pooling.
  auto segs = std::make_shared<ColSegments>();
  const int segments = topo.n0 * batch;
  segs->offsets.assign(segments + 1, 0);
  for (int s = 0; s <= segments; ++s) segs->offsets[s] = s * cfg.k * L;
  segs->indices.resize(static_cast<std::size_t>(segments) * cfg.k * L);
  {
    int at = 0;
    for (NodeId origin = 0; origin < topo.n0; ++origin)
      for (int b = 0; b < batch; ++b)
        for (int step = 0; step < L; ++step)
          for (int j = 0; j < cfg.k; ++j)
            segs->indices[at++] = step * W + (origin * cfg.k + j) * batch + b;
  }
  Var pooled = scale(t, segment_sum_cols(t, states, segs), 1.0 / (cfg.k * L));
  Var projected = linear(t, store.at(params.enc.w_out), &store.at(params.enc.b_out), pooled);
  Var agg = mlp_forward(t, store, params.phi_agg, projected);
  Var h0 = cols_block(t, H, 0, topo.n0 * batch);
  Var origin_repr = add(t, h0, agg);
  Var logits = mlp_forward(t, store, params.head, origin_repr);
  auto label_ptr = std::make_shared<const std::vector<int>>(labels);
  Var batch_loss = softmax_ce_loss(t, logits, label_ptr);

  ForwardResult result;
  result.loss = batch_loss;
  result.logits = t.value(logits);
  result.plan = plan;
  for (int w = 0; w < segments; ++w) {
    int pred = 0;
    result.logits.col(w).maxCoeff(&pred);
    if (pred == labels[w]) result.correct++;
  }
  return result;
}

ForwardResult forward(Tape& t, ParamStore& store, const ModelParams& params, const Topology& topo,
                      const Mat& features, const std::vector<int>& labels, const ModelConfig& cfg,
                      std::uint64_t seed, bool training) {
  ForwardOptions opts;
  opts.mode = training ? ForwardMode::TrainHard : ForwardMode::Eval;
  opts.walk_seed = seed;
  opts.instance_uids = {0};
  return forward_batch(t, store, params, topo, features, labels, cfg, opts);
}

}  // namespace hierwalk
