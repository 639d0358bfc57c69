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

namespace rrr {

// Accounting conventions:
//  - parameters: conv weights (no conv bias), BN scale and shift, head
//    weight and bias. BN running statistics are buffers and not counted.
//  - FLOPs: multiply-adds of convolutions (Kh*Kw*Cin*Cout*Hout*Wout) and
//    of the head (features*classes). BN, ReLU, pooling, residual adds and
//    softmax are not counted.
//  - The 3x3 convolution carries the block stride; 1x1 reductions run at
//    the block's input resolution.

struct PhaseCost {
  std::string phase;  // "conv1", "conv2_x", ..., "conv5_x", "head"
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t first_block_params = 0;  // summed over branches
  std::int64_t first_block_flops = 0;
  std::int64_t weight_params = 0;  // conv and head weights only (no BN, no bias)
};

struct CostReport {
  std::vector<PhaseCost> per_phase;
  std::int64_t total_params = 0;
  std::int64_t total_flops = 0;
};

struct BlockCost {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t weight_params = 0;
};

/// Cost of one enumerated block (stem or bottleneck), one branch copy.
BlockCost block_cost(const BlockDescriptor& block);

/// Cost of one classification head.
BlockCost head_cost(int features, int num_classes);

CostReport analyze(const ArchSpec& spec);
CostReport count_params(const ArchSpec& spec);
CostReport count_flops(const ArchSpec& spec);

std::int64_t total_params(const ArchSpec& spec);
std::int64_t total_flops(const ArchSpec& spec);

/// 1 - variant / baseline. Throws ValidationError when the baseline is
/// not positive or is smaller than the variant.
double sparsity_of(std::int64_t variant_params, std::int64_t baseline_params);
double sparsity_of(const ArchSpec& variant, const ArchSpec& baseline);

/// CSV rows (with header) for the `analyze` subcommand.
std::string cost_report_csv(const ArchSpec& spec, const CostReport& report);

}  // namespace rrr
