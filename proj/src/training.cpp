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
#include "rrr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>

#include "rrr/csv.hpp"
#include "rrr/errors.hpp"
#include "rrr/graph.hpp"
#include "rrr/surgery.hpp"

namespace rrr {
namespace {

Stage stage_of(TrainScope scope) {
  switch (scope) {
    case TrainScope::kAll: return Stage::kImage;
    case TrainScope::kTails: return Stage::kTrunk;
    case TrainScope::kHeads: return Stage::kHeads;
  }
  return Stage::kImage;
}

// Every tensor the recorded segment touches, running stats included.
std::vector<std::string> segment_tensors(const ArchSpec& spec, const TensorStore& store, const NetworkLayout& layout,
                                         Stage stage) {
  const auto parts = split_layout(spec, layout);
  std::vector<std::string> prefixes;
  if (stage == Stage::kImage) {
    prefixes = {"conv1", "bn1"};
    for (const auto& b : parts.stump) prefixes.push_back(b.prefix);
  }
  if (stage != Stage::kHeads) {
    for (const auto& b : parts.trunk) prefixes.push_back(b.prefix);
    for (const auto& tail : parts.tails)
      for (const auto& b : tail) prefixes.push_back(b.prefix);
  }
  for (const auto& h : layout.heads) prefixes.push_back(h);
  std::vector<std::string> out;
  for (const auto& p : prefixes) {
    auto names = names_with_prefix(store, p);
    if (names.empty()) throw ShapeError("missing tensor '" + p + ".*'");
    out.insert(out.end(), names.begin(), names.end());
  }
  return out;
}

// Input to the recorded segment for one example: the normalized image, the
// stump output, or each branch's final feature map.
using Cached = std::vector<FeatureMap>;

Cached frozen_prefix(const Network& net, const LayoutParts& parts, Stage stage, const Image& image) {
  auto x = net.normalize_input(image);
  if (stage == Stage::kImage) return {std::move(x)};
  x = net.run_stem(x);
  for (const auto& b : parts.stump) x = net.run_block(b, x);
  if (stage == Stage::kTrunk) return {std::move(x)};
  for (const auto& b : parts.trunk) x = net.run_block(b, x);
  Cached out;
  for (const auto& tail : parts.tails) {
    FeatureMap y = x;
    for (const auto& b : tail) y = net.run_block(b, y);
    out.push_back(std::move(y));
  }
  return out;
}

// Inference-mode logits per head from a cached segment input.
std::vector<std::vector<float>> logits_from(const Network& net, const LayoutParts& parts, Stage stage,
                                            const Cached& in) {
  std::vector<std::vector<float>> out;
  if (stage == Stage::kHeads) {
    for (std::size_t b = 0; b < in.size(); ++b) out.push_back(net.run_head(static_cast<int>(b), in[b]));
    return out;
  }
  FeatureMap x = in.at(0);
  if (stage == Stage::kImage) {
    x = net.run_stem(x);
    for (const auto& b : parts.stump) x = net.run_block(b, x);
  }
  for (const auto& b : parts.trunk) x = net.run_block(b, x);
  for (std::size_t t = 0; t < parts.tails.size(); ++t) {
    FeatureMap y = x;
    for (const auto& b : parts.tails[t]) y = net.run_block(b, y);
    out.push_back(net.run_head(static_cast<int>(t), y));
  }
  return out;
}

EvalResult score(const std::vector<std::vector<std::vector<float>>>& logits, const std::vector<int>& labels) {
  EvalResult r;
  if (labels.empty()) return r;
  const std::size_t heads = logits.front().size();
  r.per_branch.assign(heads, 0.0);
  int correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto rows = logits[i];
    for (std::size_t h = 0; h < heads; ++h) {
      kernels::softmax(std::span<float>(rows[h]));
      for (float v : rows[h]) {
        if (!std::isfinite(v)) throw NumericError("non-finite network output");
      }
      if (argmax(rows[h]) == labels[i]) r.per_branch[h] += 1.0;
    }
    if (argmax(ensemble_average(rows)) == labels[i]) ++correct;
  }
  const double n = static_cast<double>(labels.size());
  r.accuracy = correct / n;
  for (auto& a : r.per_branch) a /= n;
  return r;
}

template <class T>
Tensor<T> stack(const std::vector<const FeatureMap*>& maps) {
  const auto& f = *maps.front();
  Tensor<T> t({static_cast<int>(maps.size()), f.channels, f.height, f.width});
  std::size_t at = 0;
  for (const auto* m : maps) {
    if (m->data.size() != f.data.size()) throw ShapeError("batch members differ in shape");
    std::copy(m->data.begin(), m->data.end(), t.data.begin() + static_cast<std::ptrdiff_t>(at));
    at += m->data.size();
  }
  return t;
}

// Records the segment for a batch and returns the summed loss node.
template <class T>
typename ad::Tape<T>::Id record_loss(GraphBuilder<T>& g, const ArchSpec& spec, const NetworkLayout& layout, Stage stage,
                                     const std::vector<const Cached*>& batch, const std::vector<int>& labels) {
  std::vector<typename ad::Tape<T>::Id> inputs;
  const std::size_t slots = batch.front()->size();
  for (std::size_t s = 0; s < slots; ++s) {
    std::vector<const FeatureMap*> maps;
    for (const auto* c : batch) maps.push_back(&c->at(s));
    inputs.push_back(g.tape.leaf(stack<T>(maps), false));
  }
  const auto logits = g.logits(spec, layout, stage, inputs);
  typename ad::Tape<T>::Id loss = g.tape.softmax_ce(logits[0], labels);
  for (std::size_t h = 1; h < logits.size(); ++h) loss = g.tape.add(loss, g.tape.softmax_ce(logits[h], labels));
  return loss;
}

std::vector<Cached> prefix_all(const Network& net, const LayoutParts& parts, Stage stage, const Dataset& data) {
  std::vector<Cached> out;
  out.reserve(data.examples.size());
  for (const auto& e : data.examples) out.push_back(frozen_prefix(net, parts, stage, e.image));
  return out;
}

std::vector<int> labels_of(const Dataset& data) {
  std::vector<int> y;
  for (const auto& e : data.examples) y.push_back(e.label);
  return y;
}

EvalResult evaluate_cached(const Network& net, const LayoutParts& parts, Stage stage, const std::vector<Cached>& in,
                           const std::vector<int>& labels) {
  std::vector<std::vector<std::vector<float>>> logits;
  logits.reserve(in.size());
  for (const auto& c : in) logits.push_back(logits_from(net, parts, stage, c));
  return score(logits, labels);
}

void check_task(const ArchSpec& spec, const Dataset& data) {
  data.validate();
  if (data.examples.empty()) throw ValidationError("dataset is empty");
  if (data.side() != spec.input_side) {
    throw ValidationError("images have side " + std::to_string(data.side()) + ", spec expects " +
                          std::to_string(spec.input_side));
  }
  if (data.num_classes != spec.num_classes) {
    throw ValidationError("dataset has " + std::to_string(data.num_classes) + " classes, spec expects " +
                          std::to_string(spec.num_classes));
  }
}

}  // namespace

void Dataset::validate() const {
  if (num_classes < 1) throw ValidationError("num_classes must be positive");
  for (const auto& e : examples) {
    if (e.label < 0 || e.label >= num_classes) throw ValidationError("label " + std::to_string(e.label) + " out of range");
    const auto& first = examples.front().image.shape;
    if (e.image.shape != first || first.size() != 3 || first[0] != kImageChannels || first[1] != first[2]) {
      throw ValidationError("images must share one 3 x S x S shape");
    }
  }
}

Dataset synth_dataset(int num_classes, int per_class, int side, std::uint64_t seed) {
  if (side < kMinInputSide) throw ValidationError("side must be at least " + std::to_string(kMinInputSide));
  if (num_classes < 1 || per_class < 1) throw ValidationError("num_classes and per_class must be positive");
  Dataset d;
  d.num_classes = num_classes;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double freq = kTwoPi * 4.0 / side;
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < num_classes; ++c) {
      Rng rng(seed, static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(num_classes) + c);
      const double theta = std::numbers::pi * c / num_classes + rng.uniform(-0.1, 0.1);
      const double phase = rng.uniform(0.0, kTwoPi);
      const double ct = std::cos(theta), st = std::sin(theta);
      Image img({kImageChannels, side, side});
      for (int ch = 0; ch < kImageChannels; ++ch) {
        // Class tint: a mean offset per channel, so even a centroid sees it.
        const double base = 0.5 + 0.1 * std::cos(kTwoPi * c / num_classes + kTwoPi * ch / 3.0);
        for (int y = 0; y < side; ++y)
          for (int x = 0; x < side; ++x) {
            const double v = base + 0.3 * std::sin(freq * (x * ct + y * st) + phase) + 0.08 * rng.normal();
            img.data[(static_cast<std::size_t>(ch) * side + y) * side + x] =
                static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
      }
      d.examples.push_back({std::move(img), c});
    }
  }
  return d;
}

void save_dataset(const Dataset& data, const std::string& path) {
  data.validate();
  TensorStore s;
  const int n = static_cast<int>(data.examples.size());
  const int side = data.side();
  TensorF images({n, kImageChannels, side, side});
  TensorF labels({n});
  for (int i = 0; i < n; ++i) {
    const auto& e = data.examples[static_cast<std::size_t>(i)];
    std::copy(e.image.data.begin(), e.image.data.end(),
              images.data.begin() + static_cast<std::ptrdiff_t>(i) * static_cast<std::ptrdiff_t>(e.image.size()));
    labels[static_cast<std::size_t>(i)] = static_cast<float>(e.label);
  }
  s.add("images", std::move(images));
  s.add("labels", std::move(labels));
  s.add("num_classes", TensorF({1}, static_cast<float>(data.num_classes)));
  save(s, path);
}

Dataset load_dataset(const std::string& path) {
  const auto s = load(path);
  for (const char* n : {"images", "labels", "num_classes"}) {
    if (!s.contains(n)) throw FormatError("dataset file lacks '" + std::string(n) + "'");
  }
  const auto& images = s.get("images");
  const auto& labels = s.get("labels");
  if (images.rank() != 4 || labels.rank() != 1 || labels.dim(0) != images.dim(0)) {
    throw FormatError("dataset tensors disagree in shape");
  }
  Dataset d;
  d.num_classes = static_cast<int>(s.get("num_classes")[0]);
  const std::size_t per = images.size() / static_cast<std::size_t>(std::max(images.dim(0), 1));
  for (int i = 0; i < images.dim(0); ++i) {
    Image img({images.dim(1), images.dim(2), images.dim(3)});
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * per), per, img.data.begin());
    d.examples.push_back({std::move(img), static_cast<int>(labels[static_cast<std::size_t>(i)])});
  }
  try {
    d.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("dataset file: ") + e.what());
  }
  return d;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0f) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0f) || !std::isfinite(weight_decay)) throw ValidationError("weight_decay must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (ema_window_epochs < 0 || ema_window_epochs > epochs) {
    throw ValidationError("ema_window_epochs must lie in [0, epochs]");
  }
  if (!(bn_momentum > 0.0f && bn_momentum <= 1.0f)) throw ValidationError("bn_momentum must lie in (0, 1]");
  if (!(beta1 >= 0.0f && beta1 < 1.0f && beta2 >= 0.0f && beta2 < 1.0f)) throw ValidationError("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0f)) throw ValidationError("adam_eps must be positive");
}

std::map<std::string, TensorF> grad(const ArchSpec& spec, const TensorStore& store, const std::vector<Example>& batch,
                                    TrainScope scope) {
  if (batch.empty()) throw ValidationError("batch is empty");
  const Network net(spec, store);
  const auto& layout = net.layout();
  const auto parts = split_layout(spec, layout);
  const Stage stage = stage_of(scope);
  ParamMap<float> params;
  for (const auto& n : segment_tensors(spec, store, layout, stage)) params.emplace(n, store.get(n));

  std::vector<Cached> cached;
  std::vector<int> labels;
  for (const auto& e : batch) {
    cached.push_back(frozen_prefix(net, parts, stage, e.image));
    labels.push_back(e.label);
  }
  std::vector<const Cached*> ptrs;
  for (const auto& c : cached) ptrs.push_back(&c);

  ad::Tape<float> tape;
  GraphBuilder<float> g{tape, params};
  const auto loss = record_loss(g, spec, layout, stage, ptrs, labels);
  if (!std::isfinite(tape.value(loss)[0])) throw NumericError("non-finite loss");
  tape.backward(loss);
  std::map<std::string, TensorF> out;
  for (const auto& [name, id] : g.leaves) out.emplace(name, tape.grad(id));
  return out;
}

double batch_loss(const ArchSpec& spec, const TensorStore& store, const std::vector<Example>& batch) {
  if (batch.empty()) throw ValidationError("batch is empty");
  const Network net(spec, store);
  const auto parts = split_layout(spec, net.layout());
  ParamMap<float> params;
  for (const auto& n : segment_tensors(spec, store, net.layout(), Stage::kImage)) params.emplace(n, store.get(n));
  std::vector<Cached> cached;
  std::vector<int> labels;
  for (const auto& e : batch) {
    cached.push_back(frozen_prefix(net, parts, Stage::kImage, e.image));
    labels.push_back(e.label);
  }
  std::vector<const Cached*> ptrs;
  for (const auto& c : cached) ptrs.push_back(&c);
  ad::Tape<float> tape;
  GraphBuilder<float> g{tape, params};
  return tape.value(record_loss(g, spec, net.layout(), Stage::kImage, ptrs, labels))[0];
}

TrainResult train(const ArchSpec& spec, const TensorStore& store, const Dataset& data, const TrainConfig& config) {
  config.validate();
  check_task(spec, data);
  if (config.test) check_task(spec, *config.test);

  TrainResult result{store, {}};
  if (config.epochs == 0) return result;

  // The frozen part is read from `store`, which never changes; the trained
  // segment lives in `params` and is mirrored into result.store per epoch.
  const Network frozen(spec, store);
  const auto& layout = frozen.layout();
  const auto parts = split_layout(spec, layout);
  const Stage stage = stage_of(config.scope);

  ParamMap<float> params;
  for (const auto& n : segment_tensors(spec, store, layout, stage)) params.emplace(n, store.get(n));
  AdamW optimizer(config);

  const auto labels = labels_of(data);
  std::vector<Cached> cache;
  if (!config.augment) cache = prefix_all(frozen, parts, stage, data);
  std::optional<std::vector<Cached>> test_cache;
  std::vector<int> test_labels;
  if (config.test) {
    test_cache = prefix_all(frozen, parts, stage, *config.test);
    test_labels = labels_of(*config.test);
  }

  const int n = static_cast<int>(data.examples.size());
  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int window_start = config.epochs - config.ema_window_epochs;
  const double window_steps = static_cast<double>(config.ema_window_epochs) * steps_per_epoch;
  ParamEma ema(1.0 - 2.0 / (window_steps + 1.0));
  std::vector<int> order(static_cast<std::size_t>(n));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(config.seed, 2ull * static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(std::span<int>(order));
    double loss_sum = 0.0;

    for (int start = 0; start < n; start += config.batch_size) {
      const int end = std::min(n, start + config.batch_size);
      std::vector<Cached> fresh;
      std::vector<const Cached*> batch;
      std::vector<int> y;
      if (config.augment) fresh.reserve(static_cast<std::size_t>(end - start));
      for (int k = start; k < end; ++k) {
        const int i = order[static_cast<std::size_t>(k)];
        y.push_back(labels[static_cast<std::size_t>(i)]);
        if (config.augment) {
          Rng aug_rng(config.seed, 2ull * (static_cast<std::uint64_t>(epoch) * n + i) + 1);
          fresh.push_back(frozen_prefix(frozen, parts, stage,
                                        config.augment(data.examples[static_cast<std::size_t>(i)].image, aug_rng)));
          batch.push_back(&fresh.back());
        } else {
          batch.push_back(&cache[static_cast<std::size_t>(i)]);
        }
      }

      ad::Tape<float> tape;
      GraphBuilder<float> g{tape, params, true, config.bn_momentum};
      const auto loss = record_loss(g, spec, layout, stage, batch, y);
      const float loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1));
      loss_sum += loss_value;
      tape.backward(loss);

      std::map<std::string, TensorF> grads;
      for (const auto& [name, id] : g.leaves) grads.emplace(name, tape.grad(id));
      optimizer.step(params, grads);
      if (config.ema_window_epochs > 0 && epoch >= window_start) ema.update(params);
    }

    for (const auto& [name, p] : params) result.store.replace(name, p);
    const Network live(spec, result.store);
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.loss = loss_sum / steps_per_epoch;
    // Accuracy on the unaugmented data, BN in inference mode.
    const auto train_in = config.augment ? prefix_all(frozen, parts, stage, data) : std::vector<Cached>{};
    stats.train_acc = evaluate_cached(live, parts, stage, config.augment ? train_in : cache, labels).accuracy;
    if (test_cache) stats.test_acc = evaluate_cached(live, parts, stage, *test_cache, test_labels).accuracy;
    result.curve.push_back(stats);
  }

  for (const auto& [name, e] : ema.value()) result.store.replace(name, e);
  return result;
}

AdamW::AdamW(const TrainConfig& config)
    : lr_(config.learning_rate), wd_(config.weight_decay), b1_(config.beta1), b2_(config.beta2), eps_(config.adam_eps) {}

void AdamW::step(std::map<std::string, TensorF>& params, const std::map<std::string, TensorF>& grads) {
  ++t_;
  const float c1 = 1.0f - std::pow(b1_, static_cast<float>(t_));
  const float c2 = 1.0f - std::pow(b2_, static_cast<float>(t_));
  for (auto& [name, p] : params) {
    if (names::is_buffer(name)) continue;
    auto [it, fresh] = moments_.try_emplace(name);
    if (fresh) it->second = {TensorF(p.shape), TensorF(p.shape)};
    auto& [m, v] = it->second;
    const auto g = grads.find(name);
    const TensorF* gr = g == grads.end() ? nullptr : &g->second;
    if (gr && gr->shape != p.shape) throw ShapeError("gradient for '" + name + "' has the wrong shape");
    for (std::size_t k = 0; k < p.size(); ++k) {
      const float gk = gr ? (*gr)[k] : 0.0f;
      p[k] *= 1.0f - lr_ * wd_;
      m[k] = b1_ * m[k] + (1.0f - b1_) * gk;
      v[k] = b2_ * v[k] + (1.0f - b2_) * gk * gk;
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

void ParamEma::update(const std::map<std::string, TensorF>& params) {
  for (const auto& [name, p] : params) {
    if (names::is_buffer(name)) continue;
    auto [it, fresh] = avg_.try_emplace(name, p);
    if (fresh) continue;
    auto& e = it->second;
    for (std::size_t k = 0; k < p.size(); ++k) e[k] += (1.0f - decay_) * (p[k] - e[k]);
  }
}

TrainResult train_branches(const ArchSpec& spec, const TensorStore& store, const Dataset& data, TrainConfig config) {
  if (!spec.branch_plan) throw ValidationError("train_branches expects a branched spec");
  config.scope = TrainScope::kTails;
  return train(spec, store, data, config);
}

EvalResult evaluate(const ArchSpec& spec, const TensorStore& store, const Dataset& data) {
  check_task(spec, data);
  const Network net(spec, store);
  const auto parts = split_layout(spec, net.layout());
  std::vector<std::vector<std::vector<float>>> logits;
  for (const auto& e : data.examples) {
    logits.push_back(logits_from(net, parts, Stage::kImage, frozen_prefix(net, parts, Stage::kImage, e.image)));
  }
  return score(logits, labels_of(data));
}

double relative_gain(double accuracy, double previous, double reference) {
  const double diff = accuracy - previous;
  if (reference == 0.0) {
    if (diff == 0.0) return 0.0;
    return diff > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return diff / reference;
}

std::vector<std::pair<int, int>> selection_order() {
  std::vector<std::pair<int, int>> order;
  for (int phase = kFirstBottleneckPhase; phase <= kLastPhase; ++phase) {
    for (int i = 2; i <= kTemplateBlocks[static_cast<std::size_t>(phase - kFirstBottleneckPhase)]; ++i) {
      order.emplace_back(phase, i);
    }
  }
  return order;
}

SelectionResult forward_block_selection(const TensorStore& full_store, const Dataset& train_set,
                                        const Dataset& test_set, const TrainConfig& config, double epsilon,
                                        const AccuracyOracle& oracle) {
  if (std::isnan(epsilon)) throw ValidationError("epsilon must not be NaN");
  config.validate();
  train_set.validate();
  const int side = train_set.side();
  AccuracyOracle run = oracle;
  if (!run) {
    run = [&](const ArchSpec& spec, TensorStore& store) {
      TrainConfig c = config;
      c.scope = TrainScope::kAll;
      c.test = nullptr;
      store = train(spec, store, train_set, c).store;
      return evaluate(spec, store, test_set).accuracy;
    };
  }
  auto checked = [&](const ArchSpec& spec, TensorStore& store) {
    const double a = run(spec, store);
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("accuracy " + std::to_string(a) + " is outside [0, 1]");
    return a;
  };

  SelectionState state;
  state.epsilon = epsilon;
  state.current_spec = minimal_arch(train_set.num_classes, side);
  TensorStore store = extract_reduced(full_store, state.current_spec, config.seed);
  const double first = checked(state.current_spec, store);
  state.best_reference_accuracy = first;
  state.previous_accuracy = first;
  state.history.push_back({0, state.current_spec, first, 0.0, true});

  int step = 0;
  for (const auto& [phase, index] : selection_order()) {
    ++step;
    ArchSpec next = state.current_spec;
    next.blocks_per_phase[static_cast<std::size_t>(phase - kFirstBottleneckPhase)] = index;
    TensorStore grown = store;
    const auto prefix = names::block(phase, index);
    const auto block_names = names_with_prefix(full_store, prefix);
    if (block_names.empty()) throw FormatError("full store lacks block '" + prefix + "'");
    for (const auto& n : block_names) grown.add(n, full_store.get(n));

    const double acc = checked(next, grown);
    const double gain = relative_gain(acc, state.previous_accuracy, state.best_reference_accuracy);
    const bool accept = gain >= epsilon;
    state.history.push_back({step, next, acc, gain, accept});
    if (!accept) {
      // The rejected block's tensors are dropped; the rest keep this step's
      // training.
      TensorStore kept;
      for (const auto& [n, t] : grown.entries())
        if (n.rfind(prefix + ".", 0) != 0) kept.add(n, t);
      return {state.current_spec, std::move(kept), std::move(state)};
    }
    state.previous_accuracy = acc;
    state.current_spec = next;
    store = std::move(grown);
  }
  return {state.current_spec, std::move(store), std::move(state)};
}

std::string selection_csv(const SelectionState& state) {
  CsvWriter csv({"step", "spec_name", "accuracy", "relative_gain", "accepted"});
  for (const auto& h : state.history) {
    csv.row_cells({std::to_string(h.step), h.spec.name(), CsvWriter::format(h.accuracy),
                   h.step == 0 ? std::string() : CsvWriter::format(h.relative_gain), h.accepted ? "true" : "false"});
  }
  return csv.str();
}

std::string curve_csv(const std::vector<EpochStats>& curve) {
  CsvWriter csv({"epoch", "train_acc", "test_acc", "loss"});
  for (const auto& e : curve) {
    csv.row_cells({std::to_string(e.epoch), CsvWriter::format(e.train_acc),
                   e.test_acc < 0.0 ? std::string() : CsvWriter::format(e.test_acc), CsvWriter::format(e.loss)});
  }
  return csv.str();
}

}  // namespace rrr
