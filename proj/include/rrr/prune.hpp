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
#include <string>
#include <vector>

#include "rrr/archspec.hpp"
#include "rrr/tensor_store.hpp"

namespace rrr {

enum class Granularity { kElement, kChannel, kBlock };

std::string to_string(Granularity g);
Granularity parse_granularity(const std::string& s);

struct PruneSpec {
  Granularity granularity = Granularity::kBlock;
  double sparsity = 0.0;
  std::uint64_t seed = 0;
};

struct PruneResult {
  ArchSpec spec;
  TensorStore store;
  double realized_sparsity = 0.0;
};

/// Tolerance on realized vs requested sparsity for element and channel
/// pruning, and the largest gap accepted between a block request and the
/// nearest block count.
inline constexpr double kSparsityTolerance = 0.02;
inline constexpr double kBlockSparsitySlack = 0.05;

/// Sparsity is measured against the parameter count of `store`.
///  - element: exactly floor(s * n) conv weights zeroed, n = all conv
///    weights, spread over layers in proportion to their size.
///  - channel: output channels removed at random with one keep ratio for
///    every coupled channel group (stem, each block's two inner widths,
///    each phase's residual stream); consumers are slimmed to match.
///  - block: blocks removed last-added first; each phase keeps its first
///    block. Picks the block count whose sparsity is nearest the request.
PruneResult apply_prune(const ArchSpec& spec, const TensorStore& store, const PruneSpec& prune);

/// Blocks in the order forward selection adds them (conv2_2, conv2_3,
/// conv3_2, ..., conv5_3), limited to the blocks present in `spec`.
std::vector<std::pair<int, int>> block_fill_order(const ArchSpec& spec);

}  // namespace rrr
