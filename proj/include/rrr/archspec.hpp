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
#include <optional>
#include <string>
#include <vector>

namespace rrr {

/// Number of bottleneck phases (conv2_x .. conv5_x).
inline constexpr int kNumPhases = 4;

/// Per-phase block limits of the ResNet152 template.
inline constexpr std::array<int, kNumPhases> kTemplateBlocks = {3, 8, 36, 3};

/// Bottleneck widths of the template per phase; the expansion is 4x.
inline constexpr std::array<int, kNumPhases> kTemplateMidWidths = {64, 128, 256, 512};

inline constexpr int kExpansion = 4;
inline constexpr int kStemChannels = 64;
inline constexpr int kImageChannels = 3;

/// Phase numbering follows the conv<P>_x names: conv1 is phase 1, conv2_x
/// is phase 2, ..., conv5_x is phase 5.
inline constexpr int kFirstBottleneckPhase = 2;
inline constexpr int kLastPhase = 5;

/// Smallest input side the downsampling chain (stride 32) supports.
inline constexpr int kMinInputSide = 32;

/// Per-branch bottleneck width floor(C_o / sqrt(b)) - a, computed in exact
/// integer arithmetic. Throws ValidationError if the result is below 1.
int compute_branch_width(int template_width, int num_branches, int budget_offset);

struct BranchPlan {
  int num_branches = 1;
  int budget_offset = 0;
  int split_phase = 4;  // 4 -> branches start at conv4_1, 5 -> conv5_1

  /// floor(C_o / sqrt(b)) - a for the given template width.
  int branch_width(int template_mid_width) const;

  bool operator==(const BranchPlan&) const = default;
};

struct ArchSpec {
  std::array<int, kNumPhases> blocks_per_phase{1, 1, 1, 1};
  int num_classes = 20;
  int input_side = 128;
  std::optional<BranchPlan> branch_plan;

  int total_blocks() const;
  int num_branches() const { return branch_plan ? branch_plan->num_branches : 1; }

  /// True if the phase (2..5) is split into per-branch copies.
  bool is_branched_phase(int phase) const;

  /// Bottleneck width used by every branch in the phase (2..5).
  int mid_width(int phase) const;
  int out_width(int phase) const { return kExpansion * mid_width(phase); }

  /// "ResNet_x1_x2_x3_x4" with an optional "-{b}_branch" suffix.
  std::string name() const;

  /// The same architecture without the branch plan.
  ArchSpec unbranched() const;

  /// Throws ValidationError when an invariant fails.
  void validate() const;

  bool operator==(const ArchSpec&) const = default;
};

ArchSpec make_arch(int x1, int x2, int x3, int x4, int num_classes,
                   std::optional<BranchPlan> plan = std::nullopt, int input_side = 128);

ArchSpec template_arch(int num_classes, int input_side = 128);
ArchSpec minimal_arch(int num_classes, int input_side = 128);

struct BlockDescriptor {
  int phase_index = 1;            // 1..5
  int block_index_in_phase = 1;   // 1-based
  int branch = -1;                // -1 for shared (stump) entries
  bool is_downsampling = false;
  int in_channels = 0;
  int mid_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int input_spatial = 0;          // side of the feature map entering the block
  int output_spatial = 0;

  /// "conv1", "conv4_1" ...
  std::string name() const;
  bool has_projection() const { return phase_index >= 2 && block_index_in_phase == 1; }
};

/// conv1, conv2_1..conv2_x1, ..., conv5_x4. Branched phases list every
/// branch of a block position before moving to the next position.
std::vector<BlockDescriptor> enumerate_blocks(const ArchSpec& spec);

/// Feature-map side after conv1 (incl. max-pool), conv2_x, ..., conv5_x.
std::array<int, 5> spatial_chain(const ArchSpec& spec);

/// Size of the ResNet_x1_x2_x3_x4 search space under the template bounds.
std::int64_t search_space_size();

/// Block additions needed to grow ResNet_1_1_1_1 into the template.
int max_block_additions();

/// Key/value text form, one field per line.
std::string to_text(const ArchSpec& spec);
ArchSpec from_text(const std::string& text);
void save_arch(const ArchSpec& spec, const std::string& path);
ArchSpec load_arch(const std::string& path);

/// Parses "3,8,36,3".
std::array<int, kNumPhases> parse_block_counts(const std::string& csv);

}  // namespace rrr
