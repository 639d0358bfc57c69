// Copyright 2026 The rrrnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// rrr: command-line front end. Exit codes: 0 ok, 2 invalid input,
// 3 numeric or timing failure, 1 anything else.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "manifest.hpp"
#include "rrr/analyzer.hpp"
#include "rrr/bench.hpp"
#include "rrr/csv.hpp"
#include "rrr/engine.hpp"
#include "rrr/errors.hpp"
#include "rrr/prune.hpp"
#include "rrr/surgery.hpp"
#include "rrr/training.hpp"

namespace rrr::cli {
namespace {

namespace fs = std::filesystem;

// Relative inputs missing from the working directory are looked up under
// $RRR_DATA_DIR.
std::string resolve_input(const std::string& path) {
  if (path.empty() || fs::exists(path) || fs::path(path).is_absolute()) return path;
  if (const char* dir = std::getenv("RRR_DATA_DIR")) {
    const auto candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ValidationError("bad " + what + ": '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || s[0] == '-') throw ValidationError("bad " + what + ": '" + s + "'");
  return v;
}

// Options shared by the commands that need an architecture.
struct ArchOptions {
  std::string arch = "1,1,1,1";
  std::string spec_file;
  int classes = 20;
  int side = 128;
  int branches = 1;
  int split_phase = 4;
  int a = -1;  // -1: solve
  bool solve_a = false;

  void add(CLI::App* app, const std::string& default_arch) {
    arch = default_arch;
    app->add_option("--arch", arch, "blocks per phase, e.g. 3,8,36,3")->capture_default_str();
    app->add_option("--spec", spec_file, "architecture file (overrides --arch and friends)");
    app->add_option("--classes", classes, "number of classes")->capture_default_str();
    app->add_option("--side", side, "input image side")->capture_default_str();
    app->add_option("--branches", branches, "number of branches")->capture_default_str();
    app->add_option("--split-phase", split_phase, "first branched phase (4 or 5)")->capture_default_str();
    app->add_option("--a", a, "budget offset; solved when omitted")->capture_default_str();
    app->add_flag("--solve-a", solve_a, "solve the smallest budget offset");
  }

  ArchSpec build() const {
    if (!spec_file.empty()) return load_arch(resolve_input(spec_file));
    const auto blocks = parse_block_counts(arch);
    ArchSpec spec = make_arch(blocks[0], blocks[1], blocks[2], blocks[3], classes, std::nullopt, side);
    if (solve_a && a >= 0) throw ValidationError("--a and --solve-a are exclusive");
    if (branches != 1 || a >= 0) {
      const int offset = a >= 0 ? a : solve_budget_offset(spec, branches, split_phase);
      spec.branch_plan = BranchPlan{branches, offset, split_phase};
      spec.validate();
    }
    return spec;
  }
};

struct TrainOptions {
  float lr = 1e-3f;
  float wd = 0.01f;
  int batch = 32;
  int epochs = 300;
  int ema = -1;  // -1: min(60, epochs)
  std::string scope = "all";

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "learning rate")->capture_default_str();
    app->add_option("--wd", wd, "decoupled weight decay")->capture_default_str();
    app->add_option("--batch", batch, "batch size")->capture_default_str();
    app->add_option("--epochs", epochs, "epochs per training run")->capture_default_str();
    app->add_option("--ema", ema, "EMA window in epochs, 0 disables (default min(60, epochs))")->capture_default_str();
    app->add_option("--scope", scope, "all | tails | heads")->capture_default_str();
  }

  TrainConfig build(std::uint64_t seed) const {
    TrainConfig c;
    c.learning_rate = lr;
    c.weight_decay = wd;
    c.batch_size = batch;
    c.epochs = epochs;
    c.ema_window_epochs = ema >= 0 ? ema : std::min(60, epochs);
    c.seed = seed;
    if (scope == "all") {
      c.scope = TrainScope::kAll;
    } else if (scope == "tails") {
      c.scope = TrainScope::kTails;
    } else if (scope == "heads") {
      c.scope = TrainScope::kHeads;
    } else {
      throw ValidationError("unknown scope '" + scope + "'");
    }
    c.validate();
    return c;
  }
};

struct DataOptions {
  std::string data, test_data, synth;
  std::uint64_t data_seed = 0;

  void add(CLI::App* app) {
    app->add_option("--data", data, "training set (RRRW dataset file)");
    app->add_option("--test-data", test_data, "held-out set (RRRW dataset file)");
    app->add_option("--synth", synth, "synthetic task classes,per_class,side instead of files");
    app->add_option("--data-seed", data_seed, "synthetic data seed (test split uses seed + 1)")->capture_default_str();
  }

  bool given() const { return !data.empty() || !synth.empty(); }

  std::pair<Dataset, Dataset> load(std::vector<std::string>& inputs) const {
    if (!synth.empty()) {
      const auto f = split_list(synth);
      if (f.size() != 3) throw ValidationError("--synth expects classes,per_class,side");
      const int k = static_cast<int>(parse_u64(f[0], "classes"));
      const int n = static_cast<int>(parse_u64(f[1], "per_class"));
      const int s = static_cast<int>(parse_u64(f[2], "side"));
      return {synth_dataset(k, n, s, data_seed), synth_dataset(k, n, s, data_seed + 1)};
    }
    if (data.empty()) throw ValidationError("give --data or --synth");
    const auto train_path = resolve_input(data);
    inputs.push_back(train_path);
    Dataset train = load_dataset(train_path);
    Dataset test = train;
    if (!test_data.empty()) {
      const auto test_path = resolve_input(test_data);
      inputs.push_back(test_path);
      test = load_dataset(test_path);
    }
    return {std::move(train), std::move(test)};
  }
};

class Runner {
 public:
  explicit Runner(CLI::App* sub) : sub_(sub) {}

  void input(const std::string& path) { inputs_.push_back(path); }
  void seed(std::uint64_t s) { seeds_.push_back(s); }

  // Writes `content` to `path` (stdout when empty or "-") with a manifest
  // sidecar next to files.
  void output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
      std::cout << content;
      return;
    }
    write_file(path, content);
    write_manifest(path);
  }

  void output_store(const std::string& path, const TensorStore& store) {
    if (path.empty()) throw ValidationError("--out is required");
    save(store, path);
    write_manifest(path);
  }

  // For files the library already wrote.
  void sidecar(const std::string& path) const { write_manifest(path); }

  void announce_seeds() const {
    std::cerr << "seeds:";
    for (auto s : seeds_) std::cerr << ' ' << s;
    std::cerr << '\n';
  }

 private:
  static void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << content;
  }

  void write_manifest(const std::string& path) const {
    RunManifest m;
    m.command = sub_->get_name();
    for (const auto* opt : sub_->get_options()) {
      if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
      const auto& r = opt->results();
      std::string v;
      for (std::size_t i = 0; i < r.size(); ++i) v += (i ? "," : "") + r[i];
      m.flags[opt->get_name()] = r.empty() ? opt->get_default_str() : v;
    }
    m.seeds = seeds_;
    for (const auto& in : inputs_) m.input_digests[in] = sha256_file(in);
    m.timestamp = utc_timestamp();
    write_file(path + ".manifest.json", m.to_json());
  }

  CLI::App* sub_;
  std::vector<std::string> inputs_;
  std::vector<std::uint64_t> seeds_;
};

std::string with_suffix(const std::string& path, const std::string& tag) {
  const fs::path p(path);
  return (p.parent_path() / (p.stem().string() + tag + p.extension().string())).string();
}

std::vector<double> stub_accuracies(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  std::string line;
  std::vector<double> out;
  int column = -1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (column < 0) {
      const auto it = std::find(cells.begin(), cells.end(), "accuracy");
      if (it == cells.end()) throw ValidationError(path + ": header needs an 'accuracy' column");
      column = static_cast<int>(it - cells.begin());
      continue;
    }
    if (static_cast<int>(cells.size()) <= column) throw ValidationError(path + ": short row");
    out.push_back(parse_double(cells[static_cast<std::size_t>(column)], "accuracy"));
  }
  if (out.empty()) throw ValidationError(path + ": no accuracies");
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Reduce, reuse and recycle a ResNet152 template: accounting, surgery, inference, pruning, training."};
  app.require_subcommand(1);
  app.set_version_flag("--version", toolkit_version());
  std::function<void()> action;

  // analyze ------------------------------------------------------------
  auto* analyze_cmd = app.add_subcommand("analyze", "per-phase parameter and FLOP table (CSV)");
  ArchOptions analyze_arch;
  analyze_arch.add(analyze_cmd, "3,8,36,3");
  std::string analyze_out;
  analyze_cmd->add_option("--out", analyze_out, "output CSV (stdout when omitted)");
  analyze_cmd->callback([&] {
    action = [&] {
      Runner r(analyze_cmd);
      const auto spec = analyze_arch.build();
      if (spec.branch_plan) std::cerr << "budget offset a = " << spec.branch_plan->budget_offset << '\n';
      r.output(analyze_out, cost_report_csv(spec, analyze(spec)));
    };
  });

  // init ---------------------------------------------------------------
  auto* init_cmd = app.add_subcommand("init", "random stand-in checkpoint for an architecture");
  ArchOptions init_arch;
  init_arch.add(init_cmd, "3,8,36,3");
  std::uint64_t init_seed = 0;
  int init_divisor = 1;
  std::string init_out;
  init_cmd->add_option("--seed", init_seed, "initialization seed")->capture_default_str();
  init_cmd->add_option("--width-divisor", init_divisor, "divide every channel width (tests)")->capture_default_str();
  init_cmd->add_option("--out", init_out, "output store")->required();
  init_cmd->callback([&] {
    action = [&] {
      Runner r(init_cmd);
      r.seed(init_seed);
      r.announce_seeds();
      r.output_store(init_out, init_store(init_arch.build(), init_seed, WidthConfig::scaled_down(init_divisor)));
    };
  });

  // reduce -------------------------------------------------------------
  auto* reduce_cmd = app.add_subcommand("reduce", "keep the first x_i blocks per phase and attach a new head");
  ArchOptions reduce_arch;
  reduce_arch.add(reduce_cmd, "1,1,1,1");
  std::string reduce_in, reduce_out, reduce_spec_out;
  std::uint64_t reduce_seed = 0;
  reduce_cmd->add_option("--store", reduce_in, "full store")->required();
  reduce_cmd->add_option("--seed", reduce_seed, "head seed")->capture_default_str();
  reduce_cmd->add_option("--out", reduce_out, "output store")->required();
  reduce_cmd->add_option("--spec-out", reduce_spec_out, "write the architecture file here");
  reduce_cmd->callback([&] {
    action = [&] {
      Runner r(reduce_cmd);
      r.seed(reduce_seed);
      r.announce_seeds();
      const auto in = resolve_input(reduce_in);
      r.input(in);
      const auto spec = reduce_arch.build();
      r.output_store(reduce_out, extract_reduced(load(in), spec, reduce_seed));
      if (!reduce_spec_out.empty()) r.output(reduce_spec_out, to_text(spec));
    };
  });

  // split --------------------------------------------------------------
  auto* split_cmd = app.add_subcommand("split", "split the tail into budget-preserving branches");
  ArchOptions split_arch;
  split_arch.add(split_cmd, "1,1,1,1");
  std::string split_in, split_out, split_spec_out;
  std::uint64_t split_seed = 0;
  split_cmd->add_option("--store", split_in, "unbranched store")->required();
  split_cmd->add_option("--seed", split_seed, "index-list and head seed")->capture_default_str();
  split_cmd->add_option("--out", split_out, "output store")->required();
  split_cmd->add_option("--spec-out", split_spec_out, "write the architecture file here");
  split_cmd->callback([&] {
    action = [&] {
      Runner r(split_cmd);
      r.seed(split_seed);
      r.announce_seeds();
      const auto in = resolve_input(split_in);
      r.input(in);
      auto spec = split_arch.build();
      if (!spec.branch_plan) spec.branch_plan = BranchPlan{1, 0, split_arch.split_phase};
      std::cerr << spec.name() << " a=" << spec.branch_plan->budget_offset << '\n';
      r.output_store(split_out, split_kernels(load(in), spec, split_seed));
      if (!split_spec_out.empty()) r.output(split_spec_out, to_text(spec));
    };
  });

  // gen-data -----------------------------------------------------------
  auto* gen_cmd = app.add_subcommand("gen-data", "synthetic oriented-grating dataset");
  int gen_classes = 4, gen_per_class = 20, gen_side = 64;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen_cmd->add_option("--classes", gen_classes, "classes")->capture_default_str();
  gen_cmd->add_option("--per-class", gen_per_class, "examples per class")->capture_default_str();
  gen_cmd->add_option("--side", gen_side, "image side")->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output dataset file")->required();
  gen_cmd->callback([&] {
    action = [&] {
      Runner r(gen_cmd);
      r.seed(gen_seed);
      r.announce_seeds();
      save_dataset(synth_dataset(gen_classes, gen_per_class, gen_side, gen_seed), gen_out);
      r.sidecar(gen_out);
    };
  });

  // train --------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a network (branched specs train as a naive ensemble)");
  ArchOptions train_arch;
  train_arch.add(train_cmd, "1,1,1,1");
  TrainOptions train_opts;
  train_opts.add(train_cmd);
  DataOptions train_data;
  train_data.add(train_cmd);
  std::string train_store, train_out, train_curve, train_summary, train_seeds = "0";
  train_cmd->add_option("--store", train_store, "initial weights")->required();
  train_cmd->add_option("--seeds", train_seeds, "comma-separated shuffling seeds")->capture_default_str();
  train_cmd->add_option("--out", train_out, "trained store (.seedN inserted for several seeds)");
  train_cmd->add_option("--curve", train_curve, "per-epoch CSV (.seedN inserted for several seeds)");
  train_cmd->add_option("--summary", train_summary, "per-seed accuracy CSV (stdout when omitted)");
  train_cmd->callback([&] {
    action = [&] {
      Runner r(train_cmd);
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(train_seeds)) seeds.push_back(parse_u64(s, "seed"));
      if (seeds.empty()) throw ValidationError("--seeds is empty");
      for (auto s : seeds) r.seed(s);
      r.announce_seeds();
      const auto store_path = resolve_input(train_store);
      r.input(store_path);
      const auto store = load(store_path);
      std::vector<std::string> inputs;
      const auto [train_set, test_set] = train_data.load(inputs);
      for (const auto& i : inputs) r.input(i);
      const auto spec = train_arch.build();

      CsvWriter summary({"seed", "train_acc", "test_acc"});
      std::vector<double> test_accs;
      for (auto seed : seeds) {
        auto config = train_opts.build(seed);
        config.test = &test_set;
        const auto result = spec.branch_plan ? train_branches(spec, store, train_set, config)
                                             : train(spec, store, train_set, config);
        const auto tag = seeds.size() > 1 ? ".seed" + std::to_string(seed) : std::string();
        if (!train_out.empty()) r.output_store(with_suffix(train_out, tag), result.store);
        if (!train_curve.empty()) r.output(with_suffix(train_curve, tag), curve_csv(result.curve));
        const auto train_eval = evaluate(spec, result.store, train_set);
        const auto test_eval = evaluate(spec, result.store, test_set);
        summary.row(std::to_string(seed), train_eval.accuracy, test_eval.accuracy);
        test_accs.push_back(test_eval.accuracy);
      }
      const double mean = std::accumulate(test_accs.begin(), test_accs.end(), 0.0) / test_accs.size();
      summary.row_cells({"mean", "", CsvWriter::format(mean)});
      if (test_accs.size() > 1) summary.row_cells({"ci95", "", CsvWriter::format(summarize(test_accs).ci95)});
      r.output(train_summary, summary.str());
    };
  });

  // select-blocks -------------------------------------------------------
  auto* select_cmd = app.add_subcommand("select-blocks", "greedy forward block selection");
  TrainOptions select_opts;
  select_opts.add(select_cmd);
  DataOptions select_data;
  select_data.add(select_cmd);
  std::string select_store, select_stub, select_history, select_out, select_spec_out;
  double select_epsilon = kDefaultEpsilon;
  std::uint64_t select_seed = 0;
  int select_divisor = 16, select_classes = 4, select_side = 32;
  select_cmd->add_option("--store", select_store, "full template store");
  select_cmd->add_option("--epsilon", select_epsilon, "relative-improvement threshold")->capture_default_str();
  select_cmd->add_option("--stub-oracle", select_stub, "CSV with an 'accuracy' column replacing train+evaluate");
  select_cmd->add_option("--seed", select_seed, "training and head seed")->capture_default_str();
  select_cmd->add_option("--history", select_history, "selection history CSV");
  select_cmd->add_option("--out", select_out, "selected store");
  select_cmd->add_option("--spec-out", select_spec_out, "selected architecture file");
  select_cmd->add_option("--width-divisor", select_divisor, "stub mode without --store: template width divisor")
      ->capture_default_str();
  select_cmd->add_option("--classes", select_classes, "stub mode without data: classes")->capture_default_str();
  select_cmd->add_option("--side", select_side, "stub mode without data: image side")->capture_default_str();
  select_cmd->callback([&] {
    action = [&] {
      Runner r(select_cmd);
      r.seed(select_seed);
      r.announce_seeds();
      const auto config = select_opts.build(select_seed);
      TensorStore full;
      if (!select_store.empty()) {
        const auto p = resolve_input(select_store);
        r.input(p);
        full = load(p);
      } else if (!select_stub.empty()) {
        full = init_store(template_arch(select_classes, select_side), select_seed, WidthConfig::scaled_down(select_divisor));
      } else {
        throw ValidationError("--store is required without --stub-oracle");
      }
      std::pair<Dataset, Dataset> task;
      if (select_data.given()) {
        std::vector<std::string> inputs;
        task = select_data.load(inputs);
        for (const auto& i : inputs) r.input(i);
      } else if (!select_stub.empty()) {
        task.first = task.second = synth_dataset(select_classes, 1, select_side, 0);
      } else {
        throw ValidationError("give --data or --synth");
      }
      AccuracyOracle oracle;
      std::vector<double> script;
      std::size_t call = 0;
      if (!select_stub.empty()) {
        const auto p = resolve_input(select_stub);
        r.input(p);
        script = stub_accuracies(p);
        oracle = [&](const ArchSpec&, TensorStore&) { return script[std::min(call++, script.size() - 1)]; };
      }
      const auto result = forward_block_selection(full, task.first, task.second, config, select_epsilon, oracle);
      if (!select_history.empty()) r.output(select_history, selection_csv(result.state));
      if (!select_out.empty()) r.output_store(select_out, result.store);
      if (!select_spec_out.empty()) r.output(select_spec_out, to_text(result.spec));
      std::cout << result.spec.name() << '\n';
    };
  });

  // infer --------------------------------------------------------------
  auto* infer_cmd = app.add_subcommand("infer", "class probabilities for one image");
  ArchOptions infer_arch;
  infer_arch.add(infer_cmd, "1,1,1,1");
  std::string infer_store, infer_image, infer_data, infer_out;
  int infer_index = 0, infer_topk = 5;
  infer_cmd->add_option("--store", infer_store, "weights")->required();
  infer_cmd->add_option("--image", infer_image, "RRRW file holding a 3 x S x S tensor named 'image'");
  infer_cmd->add_option("--data", infer_data, "dataset file; combine with --index");
  infer_cmd->add_option("--index", infer_index, "example index in --data")->capture_default_str();
  infer_cmd->add_option("--topk", infer_topk, "rows to print")->capture_default_str();
  infer_cmd->add_option("--out", infer_out, "output CSV (stdout when omitted)");
  infer_cmd->callback([&] {
    action = [&] {
      Runner r(infer_cmd);
      const auto spec = infer_arch.build();
      const auto sp = resolve_input(infer_store);
      r.input(sp);
      const auto store = load(sp);
      Image image;
      if (!infer_image.empty()) {
        const auto p = resolve_input(infer_image);
        r.input(p);
        const auto s = load(p);
        if (!s.contains("image")) throw FormatError(p + ": no tensor named 'image'");
        image = s.get("image");
      } else if (!infer_data.empty()) {
        const auto p = resolve_input(infer_data);
        r.input(p);
        const auto d = load_dataset(p);
        if (infer_index < 0 || infer_index >= static_cast<int>(d.examples.size())) {
          throw ValidationError("--index out of range");
        }
        image = d.examples[static_cast<std::size_t>(infer_index)].image;
      } else {
        throw ValidationError("give --image or --data");
      }
      if (infer_topk < 1) throw ValidationError("--topk must be positive");
      const auto pred = forward(spec, store, image);
      std::vector<int> order(pred.probs.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pred.probs[a] > pred.probs[b]; });
      CsvWriter csv({"rank", "class", "prob"});
      for (int k = 0; k < std::min<int>(infer_topk, static_cast<int>(order.size())); ++k) {
        csv.row(k + 1, order[static_cast<std::size_t>(k)], static_cast<double>(pred.probs[order[static_cast<std::size_t>(k)]]));
      }
      r.output(infer_out, csv.str());
    };
  });

  // bench --------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "single-image latency per pruning granularity and sparsity");
  ArchOptions bench_arch;
  bench_arch.add(bench_cmd, "3,8,36,3");
  bench_arch.side = 64;
  std::string bench_store, bench_gran = "block,channel,element", bench_sparsity = "0,0.3,0.6,0.9", bench_out;
  int bench_repeats = 100, bench_warmup = 5, bench_divisor = 1;
  std::uint64_t bench_seed = 0;
  bench_cmd->add_option("--store", bench_store, "weights (random stand-in when omitted)");
  bench_cmd->add_option("--granularity", bench_gran, "comma-separated: block,channel,element")->capture_default_str();
  bench_cmd->add_option("--sparsity", bench_sparsity, "comma-separated sparsity grid")->capture_default_str();
  bench_cmd->add_option("--repeats", bench_repeats, "timed runs per variant")->capture_default_str();
  bench_cmd->add_option("--warmup", bench_warmup, "untimed runs per variant")->capture_default_str();
  bench_cmd->add_option("--seed", bench_seed, "pruning, weight and image seed")->capture_default_str();
  bench_cmd->add_option("--width-divisor", bench_divisor, "random stand-in width divisor")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "output CSV (stdout when omitted)");
  bench_cmd->callback([&] {
    action = [&] {
      Runner r(bench_cmd);
      r.seed(bench_seed);
      r.announce_seeds();
      const auto spec = bench_arch.build();
      TensorStore store;
      if (!bench_store.empty()) {
        const auto p = resolve_input(bench_store);
        r.input(p);
        store = load(p);
      } else {
        store = init_store(spec, bench_seed, WidthConfig::scaled_down(bench_divisor));
      }
      std::vector<PruneSpec> sweep;
      for (const auto& g : split_list(bench_gran)) {
        for (const auto& s : split_list(bench_sparsity)) {
          sweep.push_back({parse_granularity(g), parse_double(s, "sparsity"), bench_seed});
        }
      }
      if (sweep.empty()) throw ValidationError("empty sweep");
      r.output(bench_out, latency_csv(bench_latency(spec, store, sweep, {bench_repeats, bench_warmup, bench_seed})));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    action();
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const TimingError& e) {
    std::cerr << "timing failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace rrr::cli

int main(int argc, char** argv) { return rrr::cli::run(argc, argv); }
