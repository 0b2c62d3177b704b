#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hierwalk/harness.hpp"
#include "hierwalk/plot.hpp"

namespace fs = std::filesystem;
using namespace hierwalk;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ConfigError("empty list '" + s + "'");
  return out;
}

std::vector<Variant> parse_variant_list(const std::string& s) {
  std::vector<Variant> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_variant(item));
  }
  if (out.empty()) throw ConfigError("empty variant list '" + s + "'");
  return out;
}

/// Registers one string flag per config key; flags override the config file.
struct ConfigFlags {
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    for (const char* key : {"n", "instances", "seed", "d", "k_train", "walk_len", "epochs",
                            "warmup_epochs", "base_lr", "topology", "policy", "runs",
                            "batch_size"}) {
      std::string flag = "--" + std::string(key);
      std::replace(flag.begin(), flag.end(), '_', '-');
      cmd->add_option_function<std::string>(
          flag, [this, key](const std::string& v) { values[key] = v; });
    }
  }

  RunConfig resolve(const std::string& config_path) const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& [k, v] : values) apply_config_entry(cfg, k, v);
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive hierarchical random walks on the PrefixSum benchmark"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a PrefixSum dataset file");
  int gen_n = 16, gen_count = 1000;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "prefixsum.txt";
  gen->add_option("--n", gen_n, "nodes per instance");
  gen->add_option("--count", gen_count, "number of instances");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output file");

  // build-hier
  auto* bh = app.add_subcommand("build-hier", "Build and export a hierarchical graph");
  int bh_n = 16;
  std::uint64_t bh_seed = 1;
  std::string bh_graph, bh_partition, bh_out = "hierarchy.txt";
  bh->add_option("--n", bh_n, "line graph size (ignored when --graph is given)");
  bh->add_option("--graph", bh_graph, "input graph file (edge format)");
  bh->add_option("--seed", bh_seed, "coarsening seed");
  bh->add_option("--partition", bh_partition, "optional first-level partition file");
  bh->add_option("--out", bh_out, "output file");

  // train
  auto* tr = app.add_subcommand("train", "Train one model and save checkpoint + log");
  std::string tr_config;
  int tr_run = 0;
  std::string tr_out_dir = "runs";
  tr->add_option("--config", tr_config, "config file (key value lines)");
  tr->add_option("--run", tr_run, "run index (seeds derive from seed + run)");
  tr->add_option("--out-dir", tr_out_dir, "output directory");
  ConfigFlags tr_flags;
  tr_flags.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on its test split");
  std::string ev_ckpt;
  int ev_k = 10, ev_wl = 8;
  std::uint64_t ev_seed = 1;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--k-eval", ev_k, "walks per node at inference");
  ev->add_option("--walk-len", ev_wl, "walk length at inference");
  ev->add_option("--seed", ev_seed, "walk sampling seed");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Train/evaluate a grid and append rows to a CSV");
  std::string sw_config, sw_wls = "2,4,8,12,16", sw_ks = "10";
  std::string sw_variants = "original+uniform,hierarchical+uniform,hierarchical+learned";
  std::string sw_csv = "results.csv", sw_work = "sweep-work";
  int sw_workers = 1;
  sw->add_option("--config", sw_config, "base config file");
  sw->add_option("--walk-lens", sw_wls, "comma-separated walk lengths");
  sw->add_option("--k-evals", sw_ks, "comma-separated inference walk counts");
  sw->add_option("--variants", sw_variants, "comma-separated topology+policy variants");
  sw->add_option("--csv", sw_csv, "results CSV (appended incrementally)");
  sw->add_option("--work-dir", sw_work, "checkpoint/log directory");
  sw->add_option("--workers", sw_workers, "concurrent sweep cells");
  ConfigFlags sw_flags;
  sw_flags.attach(sw);

  // plot
  auto* pl = app.add_subcommand("plot", "Render SVG figures from a results CSV");
  std::string pl_csv = "results.csv", pl_out = "figures";
  pl->add_option("--csv", pl_csv, "results CSV");
  pl->add_option("--out-dir", pl_out, "output directory");

  // oracle
  auto* orc = app.add_subcommand("oracle", "Exact Bayes accuracy of uniform walks (n <= 6)");
  int orc_n = 4, orc_wl = 2;
  bool orc_hier = false;
  std::uint64_t orc_seed = 1;
  orc->add_option("--n", orc_n, "line graph size");
  orc->add_option("--walk-len", orc_wl, "walk length");
  orc->add_flag("--hierarchical", orc_hier, "walk the hierarchical graph");
  orc->add_option("--seed", orc_seed, "hierarchy coarsening seed");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      DatasetSplit ds = generate_dataset(gen_n, gen_count, gen_seed);
      save_dataset(ds, gen_out);
      std::cout << "wrote " << ds.total() << " instances (" << ds.train.size() << "/"
                << ds.val.size() << "/" << ds.test.size() << " split) to " << gen_out << "\n";
    } else if (bh->parsed()) {
      Graph g = bh_graph.empty() ? build_line_graph(bh_n) : Graph::load(bh_graph);
      Rng rng(bh_seed);
      HierarchicalGraph hg;
      if (bh_partition.empty()) {
        hg = build_hierarchy_structure(g, rng);
      } else {
        std::vector<NodeId> assignment = import_partition_file(g, bh_partition);
        hg = build_hierarchy_structure(g, rng, &assignment);
      }
      save_hierarchy(hg, bh_out);
      std::cout << "hierarchy: levels";
      for (int s : hg.level_sizes) std::cout << " " << s;
      std::cout << " -> " << bh_out << "\n";
    } else if (tr->parsed()) {
      RunConfig cfg = tr_flags.resolve(tr_config);
      TrainResult res = train(cfg, tr_run, tr_out_dir);
      std::cout << "best_val_acc " << res.best_val_acc << " (epoch " << res.best_epoch << ")\n"
                << "test_acc " << res.test_acc << "\n"
                << "checkpoint " << res.checkpoint.string() << "\n"
                << "log " << res.log.string() << "\n";
    } else if (ev->parsed()) {
      double acc = evaluate(ev_ckpt, ev_k, ev_wl, ev_seed);
      std::cout << "accuracy " << acc << "\n";
    } else if (sw->parsed()) {
      RunConfig cfg = sw_flags.resolve(sw_config);
      auto rows = sweep(cfg, parse_int_list(sw_wls), parse_int_list(sw_ks),
                        parse_variant_list(sw_variants), sw_csv, sw_work, sw_workers);
      std::cout << "wrote " << rows.size() << " rows to " << sw_csv << "\n";
    } else if (pl->parsed()) {
      auto files = plot_results(pl_csv, pl_out);
      for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
    } else if (orc->parsed()) {
      Graph g = build_line_graph(orc_n);
      double acc;
      if (orc_hier) {
        Rng rng(mix_seed(orc_seed, {hash_str("hierarchy")}));
        HierarchicalGraph hg = build_hierarchy_structure(g, rng);
        acc = exhaustive_uniform_walk_accuracy(hg, orc_wl);
      } else {
        acc = exhaustive_uniform_walk_accuracy(g, orc_wl);
      }
      std::cout << "oracle_accuracy " << std::setprecision(12) << acc << "\n";
      if (orc_wl <= orc_n)
        std::cout << "bound " << accuracy_bound(orc_wl, orc_n) << "\n";
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
