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

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rrr/archspec.hpp"
#include "rrr/kernels.hpp"
#include "rrr/tensor_store.hpp"

namespace rrr {

/// 3 x H x W pixels in [0, 1], before normalization.
using Image = TensorF;

struct Prediction {
  std::vector<float> probs;
  std::vector<std::vector<float>> per_branch_probs;  // one row per branch
};

inline constexpr float kBnEps = 1e-5f;
inline constexpr double kSimplexTolerance = 1e-5;

/// Tensor names of one convolution and its batch norm.
struct ConvBnLayout {
  std::string conv;  // weight name
  std::string bn;    // BN prefix; fields .weight .bias .running_mean .running_var
  int kernel = 1;
  int stride = 1;
  int pad = 0;
};

struct BlockLayout {
  std::string prefix;
  int phase = 2;
  int index = 1;
  int branch = -1;
  ConvBnLayout reduce, spatial, expand;
  std::optional<ConvBnLayout> proj;
};

/// Execution order of a spec: stem, shared blocks, then one tail per branch
/// ending in its own head. Unbranched specs have one empty tail.
struct NetworkLayout {
  ConvBnLayout stem;
  std::vector<BlockLayout> stump;
  std::vector<std::vector<BlockLayout>> tails;
  std::vector<std::string> heads;  // "fc" or "fc.branchI"
};

NetworkLayout make_layout(const ArchSpec& spec);

/// Feature map with its shape, C x H x W.
struct FeatureMap {
  int channels = 0, height = 0, width = 0;
  std::vector<float> data;
  Shape shape() const { return {channels, height, width}; }
};

/// Compiled view of a store for one spec. Holds pointers into the store,
/// which must outlive it. Construction checks every tensor shape and throws
/// ShapeError naming the first offending tensor. Const member functions are
/// safe to call concurrently.
class Network {
 public:
  Network(const ArchSpec& spec, const TensorStore& store);

  Prediction forward(const Image& image) const;

  /// Per-phase output shapes recorded during a forward pass:
  /// ("conv1", C x H x W), ("conv2_x", ...), ..., one entry per phase
  /// (branch 0 for branched phases).
  std::vector<std::pair<std::string, Shape>> trace_shapes(const Image& image) const;

  // Building blocks shared with the trainer's frozen-prefix cache.
  FeatureMap normalize_input(const Image& image) const;
  FeatureMap run_stem(const FeatureMap& x) const;
  FeatureMap run_block(const BlockLayout& block, const FeatureMap& x) const;
  std::vector<float> run_head(int branch, const FeatureMap& x) const;  // logits

  const NetworkLayout& layout() const { return layout_; }
  const ArchSpec& spec() const { return spec_; }

 private:
  struct BoundConvBn {
    const TensorF* weight = nullptr;
    const TensorF *gamma = nullptr, *beta = nullptr, *mean = nullptr, *var = nullptr;
    int kernel = 1, stride = 1, pad = 0;
  };
  struct BoundBlock {
    BoundConvBn reduce, spatial, expand;
    std::optional<BoundConvBn> proj;
  };
  struct BoundHead {
    const TensorF *weight = nullptr, *bias = nullptr;
  };

  BoundConvBn bind(const ConvBnLayout& l) const;
  BoundBlock bind(const BlockLayout& b) const;
  FeatureMap conv_bn(const BoundConvBn& l, const FeatureMap& x, bool relu, kernels::Workspace<float>& ws) const;
  FeatureMap block(const BoundBlock& b, const FeatureMap& x, kernels::Workspace<float>& ws) const;
  std::vector<float> head(const BoundHead& h, const FeatureMap& x) const;
  std::vector<std::vector<float>> run(const Image& image,
                                      std::vector<std::pair<std::string, Shape>>* trace) const;
  void validate() const;

  ArchSpec spec_;
  const TensorStore* store_;
  NetworkLayout layout_;
  BoundConvBn stem_;
  std::vector<BoundBlock> stump_;
  std::vector<std::vector<BoundBlock>> tails_;
  std::vector<BoundHead> heads_;
  const TensorF* mean_ = nullptr;
  const TensorF* std_ = nullptr;
};

/// Validates, builds a Network and runs one image.
Prediction forward(const ArchSpec& spec, const TensorStore& store, const Image& image);

/// Elementwise mean of per-branch distributions, summed in branch order.
/// Throws ValidationError when a row is off the simplex.
std::vector<float> ensemble_average(const std::vector<std::vector<float>>& per_branch);

/// Index of the largest entry (first on ties).
int argmax(const std::vector<float>& v);

}  // namespace rrr
