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

// Records a network (or its trainable suffix) on an autodiff tape.

#include <map>
#include <string>
#include <vector>

#include "rrr/archspec.hpp"
#include "rrr/autodiff.hpp"
#include "rrr/engine.hpp"

namespace rrr {

template <class T>
using ParamMap = std::map<std::string, Tensor<T>>;

/// Where the recorded graph starts.
///  kImage: normalized images; stem, every block and the heads are recorded.
///  kTrunk: output of the frozen stump (conv1 .. the phase before the split);
///          the remaining shared blocks, the branch tails and heads are
///          recorded.
///  kHeads: each branch's final feature map; only the heads are recorded.
enum class Stage { kImage, kTrunk, kHeads };

/// First phase that is not part of the frozen stump.
inline int stump_end_phase(const ArchSpec& spec) {
  return spec.branch_plan ? spec.branch_plan->split_phase : 4;
}

/// Partition of a layout into frozen stump blocks, shared trunk blocks
/// after the stump, and per-branch tails.
struct LayoutParts {
  std::vector<BlockLayout> stump, trunk;
  std::vector<std::vector<BlockLayout>> tails;
};

inline LayoutParts split_layout(const ArchSpec& spec, const NetworkLayout& layout) {
  LayoutParts parts;
  const int end = stump_end_phase(spec);
  for (const auto& b : layout.stump) (b.phase < end ? parts.stump : parts.trunk).push_back(b);
  parts.tails = layout.tails;
  return parts;
}

template <class T>
struct GraphBuilder {
  using Id = typename ad::Tape<T>::Id;

  GraphBuilder(ad::Tape<T>& t, ParamMap<T>& p, bool training = true, T bn_momentum = T(0.1))
      : tape(t), params(p), bn_training(training), momentum(bn_momentum) {}

  ad::Tape<T>& tape;
  ParamMap<T>& params;  // running statistics are updated here in training mode
  bool bn_training;
  T momentum;
  std::map<std::string, Id> leaves;  // parameter leaves recorded so far; may be pre-seeded

  Id param(const std::string& name) {
    auto it = leaves.find(name);
    if (it != leaves.end()) return it->second;
    auto p = params.find(name);
    if (p == params.end()) throw ShapeError("missing tensor '" + name + "'");
    const Id id = tape.leaf(p->second, true);
    leaves.emplace(name, id);
    return id;
  }

  Id conv_bn(const ConvBnLayout& l, Id x, bool relu) {
    Id y = tape.conv2d(x, param(l.conv), l.stride, l.pad);
    auto& rm = params.at(l.bn + ".running_mean");
    auto& rv = params.at(l.bn + ".running_var");
    y = tape.batch_norm(y, param(l.bn + ".weight"), param(l.bn + ".bias"), rm.ptr(), rv.ptr(), bn_training, momentum,
                        static_cast<T>(kBnEps));
    return relu ? tape.relu(y) : y;
  }

  Id block(const BlockLayout& b, Id x) {
    Id h = conv_bn(b.reduce, x, true);
    h = conv_bn(b.spatial, h, true);
    h = conv_bn(b.expand, h, false);
    const Id skip = b.proj ? conv_bn(*b.proj, x, false) : x;
    return tape.relu(tape.add(h, skip));
  }

  Id head(const std::string& prefix, Id x) {
    return tape.linear(tape.global_avg_pool(x), param(prefix + ".weight"), param(prefix + ".bias"));
  }

  /// Returns one logits node per branch. `inputs` holds a single node for
  /// kImage and kTrunk, and one node per branch for kHeads.
  std::vector<Id> logits(const ArchSpec& spec, const NetworkLayout& layout, Stage stage, const std::vector<Id>& inputs) {
    const auto parts = split_layout(spec, layout);
    std::vector<Id> out;
    if (stage == Stage::kHeads) {
      if (inputs.size() != layout.heads.size()) throw ShapeError("one input per head expected");
      for (std::size_t b = 0; b < layout.heads.size(); ++b) out.push_back(head(layout.heads[b], inputs[b]));
      return out;
    }
    Id x = inputs.at(0);
    if (stage == Stage::kImage) {
      x = conv_bn(layout.stem, x, true);
      x = tape.max_pool(x, 3, 2, 1);
      for (const auto& b : parts.stump) x = block(b, x);
    }
    for (const auto& b : parts.trunk) x = block(b, x);
    for (std::size_t t = 0; t < parts.tails.size(); ++t) {
      Id y = x;
      for (const auto& b : parts.tails[t]) y = block(b, y);
      out.push_back(head(layout.heads[t], y));
    }
    return out;
  }
};

}  // namespace rrr
