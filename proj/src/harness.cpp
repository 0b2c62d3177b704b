#include "hierwalk/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace hierwalk {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

void tune_allocator() {
#ifdef __GLIBC__
  static std::atomic<bool> done{false};
  if (!done.exchange(true)) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  }
#endif
}

const char* to_string(TopologyKind k) {
  return k == TopologyKind::OriginalOnly ? "original" : "hierarchical";
}

TopologyKind topology_kind_from_string(const std::string& s) {
  if (s == "original") return TopologyKind::OriginalOnly;
  if (s == "hierarchical") return TopologyKind::Hierarchical;
  throw ConfigError("unknown topology '" + s + "'");
}

void RunConfig::validate() const {
  if (n < 2) throw ConfigError("n must be at least 2");
  if (instances < 10) throw ConfigError("instances must be at least 10");
  if (d < 1) throw ConfigError("d must be positive");
  if (k_train < 1) throw ConfigError("k_train must be positive");
  if (walk_len < 1) throw ConfigError("walk_len must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= epochs)
    throw ConfigError("warmup_epochs must satisfy 0 <= warmup < epochs");
  if (base_lr <= 0) throw ConfigError("base_lr must be positive");
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
}

RunConfig ci_preset() {
  RunConfig cfg;
  cfg.n = 8;
  cfg.instances = 200;
  cfg.epochs = 50;
  cfg.runs = 2;
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "n " << cfg.n << "\n";
  os << "instances " << cfg.instances << "\n";
  os << "seed " << cfg.seed << "\n";
  os << "d " << cfg.d << "\n";
  os << "k_train " << cfg.k_train << "\n";
  os << "walk_len " << cfg.walk_len << "\n";
  os << "epochs " << cfg.epochs << "\n";
  os << "warmup_epochs " << cfg.warmup_epochs << "\n";
  os << "base_lr " << std::setprecision(17) << cfg.base_lr << "\n";
  os << "topology " << to_string(cfg.topology) << "\n";
  os << "policy " << to_string(cfg.policy) << "\n";
  os << "runs " << cfg.runs << "\n";
  os << "batch_size " << cfg.batch_size << "\n";
  return os.str();
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "n") cfg.n = std::stoi(value);
    else if (key == "instances") cfg.instances = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "d") cfg.d = std::stoi(value);
    else if (key == "k_train") cfg.k_train = std::stoi(value);
    else if (key == "walk_len") cfg.walk_len = std::stoi(value);
    else if (key == "epochs") cfg.epochs = std::stoi(value);
    else if (key == "warmup_epochs") cfg.warmup_epochs = std::stoi(value);
    else if (key == "base_lr") cfg.base_lr = std::stod(value);
    else if (key == "topology") cfg.topology = topology_kind_from_string(value);
    else if (key == "policy") cfg.policy = policy_mode_from_string(value);
    else if (key == "runs") cfg.runs = std::stoi(value);
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw ConfigError("invalid value '" + value + "' for config key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("value '" + value + "' out of range for config key '" + key + "'");
  }
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key >> value))
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key value'");
    apply_config_entry(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is);
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = hash_str(serialize_config(cfg));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::unique_ptr<TaskSetup> make_task_setup(const RunConfig& cfg) {
  auto setup = std::make_unique<TaskSetup>();
  setup->line = build_line_graph(cfg.n);
  setup->hierarchical = cfg.topology == TopologyKind::Hierarchical;
  if (setup->hierarchical) {
    Rng rng(mix_seed(cfg.seed, {hash_str("hierarchy")}));
    setup->hier = build_hierarchy_structure(setup->line, rng);
    setup->topo = hierarchical_topology(setup->hier);
  } else {
    setup->topo = original_topology(setup->line);
  }
  setup->base_features = Mat::Zero(2, cfg.n);
  for (int i = 0; i < cfg.n; ++i)
    setup->base_features(1, i) = cfg.n > 1 ? static_cast<double>(i) / (cfg.n - 1) : 0.0;
  return setup;
}

void fill_batch(const TaskSetup& setup, std::span<const PrefixSumInstance* const> instances,
                Mat& features, std::vector<int>& labels) {
  const int batch = static_cast<int>(instances.size());
  const int total = setup.topo.total_nodes();
  const int n0 = setup.topo.n0;
  features.resize(2, static_cast<Eigen::Index>(total) * batch);
  labels.assign(static_cast<std::size_t>(n0) * batch, 0);
  Mat inst_feats = setup.base_features;
  for (int b = 0; b < batch; ++b) {
    const PrefixSumInstance& inst = *instances[b];
    if (inst.n != n0) throw std::invalid_argument("instance size does not match topology");
    for (int i = 0; i < n0; ++i) inst_feats(0, i) = static_cast<double>(inst.bits[i]);
    Mat lifted = setup.hierarchical ? lift_features(setup.hier, inst_feats) : inst_feats;
    for (int v = 0; v < total; ++v) features.col(static_cast<Eigen::Index>(v) * batch + b) = lifted.col(v);
    for (int i = 0; i < n0; ++i) labels[static_cast<std::size_t>(i) * batch + b] = inst.labels[i];
  }
}

namespace {

ModelConfig model_config(const RunConfig& cfg, int k, int walk_len) {
  ModelConfig mc;
  mc.d = cfg.d;
  mc.k = k;
  mc.walk_len = walk_len;
  mc.tau = 1.0;
  mc.policy = cfg.policy;
  return mc;
}

constexpr int kEvalBatch = 50;

}  // namespace

double evaluate_split(const TaskSetup& setup, ParamStore& store, const ModelParams& params,
                      std::span<const PrefixSumInstance> instances, const ModelConfig& mc,
                      std::uint64_t seed) {
  if (instances.empty()) throw std::invalid_argument("evaluate_split: empty split");
  long correct = 0;
  long total = 0;
  Mat features;
  std::vector<int> labels;
  for (std::size_t at = 0; at < instances.size(); at += kEvalBatch) {
    const int batch = static_cast<int>(std::min<std::size_t>(kEvalBatch, instances.size() - at));
    std::vector<const PrefixSumInstance*> ptrs(batch);
    std::vector<std::uint64_t> uids(batch);
    for (int b = 0; b < batch; ++b) {
      ptrs[b] = &instances[at + b];
      uids[b] = at + b;
    }
    fill_batch(setup, ptrs, features, labels);
    Tape tape;
    ForwardOptions opts;
    opts.mode = ForwardMode::Eval;
    opts.walk_seed = seed;
    opts.instance_uids = uids;
    ForwardResult res = forward_batch(tape, store, params, setup.topo, features, labels, mc, opts);
    correct += res.correct;
    total += static_cast<long>(labels.size());
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(const RunConfig& cfg, int run_index, const fs::path& out_dir) {
  tune_allocator();
  cfg.validate();
  const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run_index);
  auto setup = make_task_setup(cfg);
  DatasetSplit data = generate_dataset(cfg.n, cfg.instances, cfg.seed);

  ParamStore store;
  Rng init_rng(mix_seed(run_seed, {hash_str("init")}));
  ModelParams params = make_model_params(store, cfg.d, 2, init_rng);
  AdamWState opt = make_adamw(store);
  ScheduleSpec schedule{cfg.base_lr, cfg.warmup_epochs, cfg.epochs};
  ModelConfig mc = model_config(cfg, cfg.k_train, cfg.walk_len);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string stem = "run" + std::to_string(run_index);
  TrainResult result;
  result.checkpoint = out_dir / (stem + ".ckpt");
  result.log = out_dir / (stem + ".log");
  std::ofstream log(result.log);
  if (!log) throw FormatError("cannot open log file '" + result.log.string() + "'");

  std::vector<int> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Mat> best_params = store.snapshot();
  Mat features;
  std::vector<int> labels;
  const auto t0 = clock_type::now();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    Rng shuffle_rng(mix_seed(run_seed, {hash_str("shuffle"), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const int batch = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - at));
      std::vector<const PrefixSumInstance*> ptrs(batch);
      std::vector<std::uint64_t> uids(batch);
      for (int b = 0; b < batch; ++b) {
        ptrs[b] = &data.train[order[at + b]];
        uids[b] = static_cast<std::uint64_t>(order[at + b]);
      }
      fill_batch(*setup, ptrs, features, labels);
      Tape tape;
      ForwardOptions opts;
      opts.mode = ForwardMode::TrainHard;
      opts.walk_seed = mix_seed(run_seed, {hash_str("walks"), static_cast<std::uint64_t>(epoch),
                                           static_cast<std::uint64_t>(batches)});
      opts.instance_uids = uids;
      store.zero_grad();
      ForwardResult res =
          forward_batch(tape, store, params, setup->topo, features, labels, mc, opts);
      tape.backward(res.loss);
      adamw_step(opt, store, lr);
      loss_sum += tape.value(res.loss)(0, 0);
      ++batches;
    }

    const double val_acc =
        evaluate_split(*setup, store, params, data.val, mc,
                       mix_seed(run_seed, {hash_str("val"), static_cast<std::uint64_t>(epoch)}));
    if (val_acc > result.best_val_acc) {
      result.best_val_acc = val_acc;
      result.best_epoch = epoch;
      best_params = store.snapshot();
    }
    log << "epoch " << epoch << " loss " << std::setprecision(10) << loss_sum / batches
        << " val_acc " << val_acc << " lr " << lr << "\n";
  }
  result.train_seconds = std::chrono::duration<double>(clock_type::now() - t0).count();

  store.restore(best_params);
  result.test_acc = evaluate_split(*setup, store, params, data.test, mc,
                                   mix_seed(run_seed, {hash_str("test")}));
  log << "best_epoch " << result.best_epoch << " best_val_acc " << std::setprecision(10)
      << result.best_val_acc << " test_acc " << result.test_acc << "\n";

  std::map<std::string, std::string> meta;
  meta["n"] = std::to_string(cfg.n);
  meta["instances"] = std::to_string(cfg.instances);
  meta["data_seed"] = std::to_string(cfg.seed);
  meta["d"] = std::to_string(cfg.d);
  meta["in_dim"] = "2";
  meta["k_train"] = std::to_string(cfg.k_train);
  meta["walk_len"] = std::to_string(cfg.walk_len);
  meta["topology"] = to_string(cfg.topology);
  meta["policy"] = to_string(cfg.policy);
  meta["run_index"] = std::to_string(run_index);
  meta["best_epoch"] = std::to_string(result.best_epoch);
  save_checkpoint(result.checkpoint.string(), store, meta);
  return result;
}

namespace {

std::string require_meta(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw ConfigError("checkpoint missing meta key '" + key + "'");
  return it->second;
}

}  // namespace

double evaluate(const fs::path& checkpoint, int k_eval, int walk_len, std::uint64_t seed) {
  tune_allocator();
  if (k_eval < 1) throw std::invalid_argument("k_eval must be at least 1");
  Checkpoint ckpt = load_checkpoint(checkpoint.string());
  RunConfig cfg;
  cfg.n = std::stoi(require_meta(ckpt, "n"));
  cfg.instances = std::stoi(require_meta(ckpt, "instances"));
  cfg.seed = std::stoull(require_meta(ckpt, "data_seed"));
  cfg.d = std::stoi(require_meta(ckpt, "d"));
  cfg.k_train = std::stoi(require_meta(ckpt, "k_train"));
  cfg.walk_len = std::stoi(require_meta(ckpt, "walk_len"));
  cfg.topology = topology_kind_from_string(require_meta(ckpt, "topology"));
  cfg.policy = policy_mode_from_string(require_meta(ckpt, "policy"));

  auto setup = make_task_setup(cfg);
  DatasetSplit data = generate_dataset(cfg.n, cfg.instances, cfg.seed);
  ParamStore store;
  Rng init_rng(0);
  ModelParams params = make_model_params(store, cfg.d, 2, init_rng);
  load_into_store(ckpt, store);
  ModelConfig mc = model_config(cfg, k_eval, walk_len);
  return evaluate_split(*setup, store, params, data.test, mc, seed);
}

std::string csv_header() {
  return "config_hash,run_index,k_eval,walk_len,topology,policy,test_accuracy,bound,wall_seconds";
}

std::string to_csv(const ResultRow& row) {
  std::ostringstream os;
  os << row.config_hash << "," << row.run_index << "," << row.k_eval << "," << row.walk_len << ","
     << to_string(row.topology) << "," << to_string(row.policy) << "," << std::setprecision(17)
     << row.test_accuracy << "," << row.bound << "," << row.wall_seconds;
  return os.str();
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open results file '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + ": empty results file");
  if (line != csv_header())
    throw FormatError(path + ":1: bad header; expected '" + csv_header() + "'");
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 9 fields, got " +
                        std::to_string(fields.size()));
    try {
      ResultRow row;
      row.config_hash = fields[0];
      row.run_index = std::stoi(fields[1]);
      row.k_eval = std::stoi(fields[2]);
      row.walk_len = std::stoi(fields[3]);
      row.topology = topology_kind_from_string(fields[4]);
      row.policy = policy_mode_from_string(fields[5]);
      row.test_accuracy = std::stod(fields[6]);
      row.bound = std::stod(fields[7]);
      row.wall_seconds = std::stod(fields[8]);
      if (row.test_accuracy < 0.0 || row.test_accuracy > 1.0)
        throw FormatError(path + ":" + std::to_string(line_no) + ": accuracy out of [0,1]");
      rows.push_back(std::move(row));
    } catch (const std::invalid_argument&) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": malformed field");
    } catch (const std::out_of_range&) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": field out of range");
    }
  }
  return rows;
}

Variant parse_variant(const std::string& s) {
  auto plus = s.find('+');
  if (plus == std::string::npos)
    throw ConfigError("variant '" + s + "' must look like 'topology+policy'");
  return Variant{topology_kind_from_string(s.substr(0, plus)),
                 policy_mode_from_string(s.substr(plus + 1))};
}

std::string to_string(const Variant& v) {
  return std::string(to_string(v.topology)) + "+" + to_string(v.policy);
}

std::vector<ResultRow> sweep(const RunConfig& base, const std::vector<int>& walk_lens,
                             const std::vector<int>& k_evals, const std::vector<Variant>& variants,
                             const fs::path& csv_path, const fs::path& work_dir, int workers) {
  tune_allocator();
  if (walk_lens.empty() || k_evals.empty() || variants.empty())
    throw std::invalid_argument("sweep needs nonempty walk_len, k_eval and variant lists");
  base.validate();
  std::error_code ec;
  fs::create_directories(work_dir, ec);

  struct Cell {
    RunConfig cfg;
    int run_index;
    std::string name;
  };
  std::vector<Cell> cells;
  for (const Variant& variant : variants)
    for (int wl : walk_lens)
      for (int run = 0; run < base.runs; ++run) {
        RunConfig cfg = base;
        cfg.topology = variant.topology;
        cfg.policy = variant.policy;
        cfg.walk_len = wl;
        std::string name = to_string(variant) + "-wl" + std::to_string(wl);
        std::replace(name.begin(), name.end(), '+', '-');
        cells.push_back({cfg, run, name});
      }

  std::ofstream csv;
  const bool fresh = !fs::exists(csv_path) || fs::file_size(csv_path, ec) == 0;
  csv.open(csv_path, std::ios::app);
  if (!csv) throw FormatError("cannot open results file '" + csv_path.string() + "'");
  if (fresh) csv << csv_header() << "\n" << std::flush;

  std::vector<ResultRow> rows;
  std::mutex mtx;
  std::atomic<std::size_t> next{0};

  auto run_cells = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      TrainResult tr = train(cell.cfg, cell.run_index, work_dir / cell.name);
      for (int k_eval : k_evals) {
        const auto t0 = clock_type::now();
        const std::uint64_t eval_seed =
            mix_seed(cell.cfg.seed + static_cast<std::uint64_t>(cell.run_index),
                     {hash_str("sweep-eval"), static_cast<std::uint64_t>(k_eval)});
        ResultRow row;
        row.config_hash = config_hash(cell.cfg);
        row.run_index = cell.run_index;
        row.k_eval = k_eval;
        row.walk_len = cell.cfg.walk_len;
        row.topology = cell.cfg.topology;
        row.policy = cell.cfg.policy;
        row.test_accuracy = evaluate(tr.checkpoint, k_eval, cell.cfg.walk_len, eval_seed);
        row.bound = accuracy_bound(std::min(cell.cfg.walk_len, cell.cfg.n), cell.cfg.n);
        row.wall_seconds =
            tr.train_seconds + std::chrono::duration<double>(clock_type::now() - t0).count();
        std::lock_guard<std::mutex> lock(mtx);
        csv << to_csv(row) << "\n" << std::flush;
        rows.push_back(row);
      }
    }
  };

  workers = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));
  if (workers == 1) {
    run_cells();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_cells);
    for (auto& th : pool) th.join();
  }
  return rows;
}

}  // namespace hierwalk
