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
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rrr/archspec.hpp"
#include "rrr/engine.hpp"
#include "rrr/rng.hpp"
#include "rrr/tensor_store.hpp"

namespace rrr {

struct Example {
  Image image;  // 3 x side x side, pixels in [0, 1]
  int label = 0;
};

struct Dataset {
  std::vector<Example> examples;
  int num_classes = 0;

  int side() const { return examples.empty() ? 0 : examples.front().image.dim(1); }
  /// Throws ValidationError on a label out of range or mixed image shapes.
  void validate() const;
};

/// Class-dependent oriented gratings with a class tint, random phase and
/// seeded pixel noise. Balanced: `per_class` examples of every class, in
/// class-interleaved order. Throws ValidationError when side < 32.
Dataset synth_dataset(int num_classes, int per_class, int side, std::uint64_t seed);

/// Stored as RRRW: "images" (N x 3 x S x S), "labels" (N) and
/// "num_classes" (1).
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Which tensors the optimizer updates.
///  kAll:   every parameter.
///  kTails: everything after the stump (conv1 .. the phase before the split
///          point, conv3_x for unbranched specs). The stump runs in inference
///          mode and its tensors are never written.
///  kHeads: the classification heads only.
enum class TrainScope { kAll, kTails, kHeads };

using Augment = std::function<Image(const Image&, Rng&)>;

struct TrainConfig {
  float learning_rate = 1e-3f;
  float weight_decay = 0.01f;
  int batch_size = 32;
  int epochs = 300;
  int ema_window_epochs = 60;  // 0 disables the average
  std::uint64_t seed = 0;
  TrainScope scope = TrainScope::kAll;
  float bn_momentum = 0.1f;
  float beta1 = 0.9f, beta2 = 0.999f, adam_eps = 1e-8f;
  Augment augment;             // optional, applied per example per epoch
  const Dataset* test = nullptr;  // evaluated after every epoch when set

  /// Throws ValidationError when a field is out of range.
  void validate() const;
};

/// Decoupled weight decay (p *= 1 - lr*wd) followed by a bias-corrected
/// adaptive-moment step. Buffers (running stats, input constants) are
/// skipped; a parameter absent from `grads` is treated as zero gradient.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& config);
  void step(std::map<std::string, TensorF>& params, const std::map<std::string, TensorF>& grads);
  long long steps() const { return t_; }

 private:
  float lr_, wd_, b1_, b2_, eps_;
  long long t_ = 0;
  std::map<std::string, std::pair<TensorF, TensorF>> moments_;
};

/// Exponential moving average of parameters; the first update copies.
/// Written as e += (1 - decay) * (p - e) so constant parameters stay exact.
class ParamEma {
 public:
  explicit ParamEma(double decay) : decay_(static_cast<float>(decay)) {}
  void update(const std::map<std::string, TensorF>& params);
  bool empty() const { return avg_.empty(); }
  const std::map<std::string, TensorF>& value() const { return avg_; }

 private:
  float decay_;
  std::map<std::string, TensorF> avg_;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_acc = 0.0;
  double test_acc = -1.0;  // -1 without a test set
  double loss = 0.0;       // mean over the epoch's batches
};

struct TrainResult {
  TensorStore store;
  std::vector<EpochStats> curve;
};

struct EvalResult {
  double accuracy = 0.0;             // ensemble vote
  std::vector<double> per_branch;    // one entry per head
};

/// Gradients of mean cross-entropy (summed over heads) for one batch with
/// BN in training mode. Only tensors trainable under `scope` get an entry.
/// Throws NumericError on a non-finite loss.
std::map<std::string, TensorF> grad(const ArchSpec& spec, const TensorStore& store, const std::vector<Example>& batch,
                                    TrainScope scope = TrainScope::kAll);

/// Mean cross-entropy summed over heads, BN in training mode; no state is
/// changed.
double batch_loss(const ArchSpec& spec, const TensorStore& store, const std::vector<Example>& batch);

/// Decoupled weight decay followed by an adaptive-moment step. With an EMA
/// window of W epochs the returned parameters are the exponential average
/// (decay 1 - 2/(steps_in_window + 1)) started at the first step of the
/// last W epochs. BN running statistics are returned as last updated.
/// Throws NumericError naming the epoch when the loss diverges.
TrainResult train(const ArchSpec& spec, const TensorStore& store, const Dataset& data, const TrainConfig& config);

/// Naive ensemble: the stump is frozen, every branch and head trains on the
/// sum of per-head cross-entropies. Requires a branched spec.
TrainResult train_branches(const ArchSpec& spec, const TensorStore& store, const Dataset& data, TrainConfig config);

EvalResult evaluate(const ArchSpec& spec, const TensorStore& store, const Dataset& data);

// ---------------------------------------------------------------------------
// Forward block selection

struct SelectionStep {
  int step = 0;  // 0 is the initial minimal network
  ArchSpec spec;
  double accuracy = 0.0;
  double relative_gain = 0.0;  // vs the previous accepted accuracy, over Accuracy*
  bool accepted = true;
};

struct SelectionState {
  ArchSpec current_spec;
  double best_reference_accuracy = 0.0;  // Accuracy*, fixed after the first evaluation
  double previous_accuracy = 0.0;        // OldAccuracy
  double epsilon = 0.01;
  std::vector<SelectionStep> history;
};

struct SelectionResult {
  ArchSpec spec;
  TensorStore store;  // weights of `spec`; the rejected block is dropped
  SelectionState state;
};

/// Trains `store` in place for one selection step and returns its test
/// accuracy. The default trains all layers with `config` and evaluates on
/// the test split.
using AccuracyOracle = std::function<double(const ArchSpec&, TensorStore&)>;

inline constexpr double kDefaultEpsilon = 0.01;

/// Relative gain (accuracy - previous) / reference. A zero reference gives
/// +inf, -inf or 0 following the sign of the difference.
double relative_gain(double accuracy, double previous, double reference);

/// Block order used by forward selection: (phase, index) for every block
/// beyond the first of each phase, phases filled in order.
std::vector<std::pair<int, int>> selection_order();

SelectionResult forward_block_selection(const TensorStore& full_store, const Dataset& train_set,
                                        const Dataset& test_set, const TrainConfig& config, double epsilon,
                                        const AccuracyOracle& oracle = {});

/// CSV with columns step, spec_name, accuracy, relative_gain, accepted.
std::string selection_csv(const SelectionState& state);
/// CSV with columns epoch, train_acc, test_acc, loss.
std::string curve_csv(const std::vector<EpochStats>& curve);

}  // namespace rrr
