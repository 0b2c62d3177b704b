#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hierwalk/model.hpp"
#include "hierwalk/prefixsum.hpp"

namespace hierwalk {

enum class TopologyKind { OriginalOnly, Hierarchical };

const char* to_string(TopologyKind k);
TopologyKind topology_kind_from_string(const std::string& s);

/// Raises glibc's mmap/trim thresholds so the large per-batch tape buffers
/// are recycled by the allocator instead of being mapped and faulted afresh
/// every step. Idempotent; called by train/evaluate/sweep.
void tune_allocator();

struct RunConfig {
  int n = 16;
  int instances = 1000;
  std::uint64_t seed = 1;
  int d = 32;
  int k_train = 10;
  int walk_len = 8;
  int epochs = 200;
  int warmup_epochs = 5;
  double base_lr = 3e-3;
  TopologyKind topology = TopologyKind::Hierarchical;
  PolicyMode policy = PolicyMode::Learned;
  int runs = 5;
  int batch_size = 16;

  void validate() const;
};

/// CI-scale preset: small enough for minute-scale smoke runs.
RunConfig ci_preset();

std::string serialize_config(const RunConfig& cfg);
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);
/// Applies one `key value` pair; unknown keys are errors.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);
std::string config_hash(const RunConfig& cfg);

/// Shared per-run working pieces: line graph, optional hierarchy, per-node
/// input features lifted over the hierarchy.
struct TaskSetup {
  Graph line;
  HierarchicalGraph hier;  // valid only for TopologyKind::Hierarchical
  bool hierarchical = false;
  Topology topo;           // points into this struct
  Mat base_features;       // in_dim x n0, position channel only; bits filled per instance

  TaskSetup(const TaskSetup&) = delete;
  TaskSetup& operator=(const TaskSetup&) = delete;
  TaskSetup() = default;
};

/// Builds the walk surface for a config; the hierarchy derives from the
/// dataset seed so every run of a sweep shares it.
std::unique_ptr<TaskSetup> make_task_setup(const RunConfig& cfg);

/// Packs instances into node-major feature/label blocks for forward_batch.
void fill_batch(const TaskSetup& setup, std::span<const PrefixSumInstance* const> instances,
                Mat& features, std::vector<int>& labels);

struct TrainResult {
  double best_val_acc = 0.0;
  int best_epoch = -1;
  double test_acc = 0.0;
  double train_seconds = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
};

/// Full training run: AdamW with warmup-cosine schedule, per-epoch validation,
/// best-validation checkpoint selection (ties keep the earlier epoch).
TrainResult train(const RunConfig& cfg, int run_index, const std::filesystem::path& out_dir);

/// Test-split accuracy of a trained checkpoint, walks re-sampled with the
/// given seed. walk_len and k may differ from training.
double evaluate(const std::filesystem::path& checkpoint, int k_eval, int walk_len,
                std::uint64_t seed);

/// Accuracy of given parameters over a list of instances.
double evaluate_split(const TaskSetup& setup, ParamStore& store, const ModelParams& params,
                      std::span<const PrefixSumInstance> instances, const ModelConfig& mc,
                      std::uint64_t seed);

struct ResultRow {
  std::string config_hash;
  int run_index = 0;
  int k_eval = 0;
  int walk_len = 0;
  TopologyKind topology = TopologyKind::Hierarchical;
  PolicyMode policy = PolicyMode::Learned;
  double test_accuracy = 0.0;
  double bound = 0.0;
  double wall_seconds = 0.0;
};

std::string csv_header();
std::string to_csv(const ResultRow& row);
std::vector<ResultRow> read_results_csv(const std::string& path);

struct Variant {
  TopologyKind topology;
  PolicyMode policy;
};

Variant parse_variant(const std::string& s);  // e.g. "hierarchical+learned"
std::string to_string(const Variant& v);

/// Cartesian product of variants x walk lengths x runs, trained once per cell
/// and evaluated at every k_eval. Rows append to the CSV as they finish
/// (crash-safe: partial results survive).
std::vector<ResultRow> sweep(const RunConfig& base, const std::vector<int>& walk_lens,
                             const std::vector<int>& k_evals, const std::vector<Variant>& variants,
                             const std::filesystem::path& csv_path,
                             const std::filesystem::path& work_dir, int workers = 1);

}  // namespace hierwalk
