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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rrr/archspec.hpp"
#include "rrr/tensor_store.hpp"

namespace rrr {

/// Channel widths of an unbranched network. The template uses 64 stem
/// channels and bottleneck widths 64/128/256/512; tests use narrower nets.
struct WidthConfig {
  int stem = kStemChannels;
  std::array<int, kNumPhases> mids = kTemplateMidWidths;

  static WidthConfig scaled_down(int divisor);
};

/// Randomly initialized weights for `spec` standing in for a pretrained
/// checkpoint: He-normal convolutions, jittered BN affine parameters and
/// running statistics, a uniform(+-1/sqrt(features)) head with zero bias and
/// the usual ImageNet normalization constants. Branched specs get
/// independent per-branch tensors at the per-branch widths from compute_branch_width.
TensorStore init_store(const ArchSpec& spec, std::uint64_t seed, const WidthConfig& widths = {});

/// Fresh head weights ("fc" or "fc.branchI") appended to `store`.
void add_fresh_head(TensorStore& store, const std::string& prefix, int features, int num_classes,
                    std::uint64_t seed);

/// Keeps conv1, the first x_i blocks of every phase, the input constants and
/// whatever head `store` carries. Throws FormatError on a missing tensor.
TensorStore keep_blocks(const TensorStore& store, const ArchSpec& spec);

/// keep_blocks followed by a freshly initialized head sized for
/// spec.num_classes.
TensorStore extract_reduced(const TensorStore& store, const ArchSpec& spec, std::uint64_t head_seed = 0);

/// Smallest a >= 0 with params(spec + BranchPlan(b, a)) <= params(spec).
/// Throws ValidationError if every candidate leaves a branch width below 1.
int solve_budget_offset(const ArchSpec& spec, int num_branches, int split_phase = 4);

/// Output-channel index list for one split layer (0-based): the identity
/// prefix when C_o >= C_b * N, otherwise the identity followed by whole
/// shuffled permutations, truncated to C_b * N entries. The shuffle stream
/// is keyed by (seed, layer_key).
std::vector<int> split_channel_indices(int pretrained_out, int branch_out, int num_branches,
                                       std::uint64_t seed, std::uint64_t layer_key);

/// Splits the pretrained tensors of the branched phases into
/// spec.num_branches() branches. Branch widths apply compute_branch_width to the widths found
/// in `store`, so narrow test networks split the same way as the template.
/// Stump tensors are copied unchanged; every branch gets a fresh head.
TensorStore split_kernels(const TensorStore& store, const ArchSpec& spec, std::uint64_t seed);

}  // namespace rrr
