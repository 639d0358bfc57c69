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
#include <gtest/gtest.h>

#include <filesystem>

#include "rrr/archspec.hpp"
#include "rrr/errors.hpp"

namespace rrr {
namespace {

TEST(ArchSpec, TemplateAndMinimalNames) {
  EXPECT_EQ(make_arch(3, 8, 36, 3, 20).name(), "ResNet_3_8_36_3");
  EXPECT_EQ(make_arch(1, 1, 1, 1, 20).name(), "ResNet_1_1_1_1");
  EXPECT_EQ(make_arch(1, 1, 1, 1, 20, BranchPlan{8, 0, 4}).name(), "ResNet_1_1_1_1-8_branch");
}

TEST(ArchSpec, RejectsOutOfBoundBlockCounts) {
  EXPECT_THROW(make_arch(4, 1, 1, 1, 20), ValidationError);
  EXPECT_THROW(make_arch(1, 9, 1, 1, 20), ValidationError);
  EXPECT_THROW(make_arch(1, 1, 37, 1, 20), ValidationError);
  EXPECT_THROW(make_arch(1, 1, 1, 4, 20), ValidationError);
  EXPECT_THROW(make_arch(0, 1, 1, 1, 20), ValidationError);
  EXPECT_THROW(make_arch(1, 1, 1, 1, 0), ValidationError);
  EXPECT_THROW(make_arch(1, 1, 1, 1, 20, std::nullopt, 16), ValidationError);
}

TEST(ArchSpec, RejectsBadBranchPlans) {
  EXPECT_THROW(make_arch(1, 1, 1, 1, 20, BranchPlan{8, 0, 3}), ValidationError);
  EXPECT_THROW(make_arch(1, 1, 1, 1, 20, BranchPlan{0, 0, 4}), ValidationError);
  // floor(256 / sqrt(8)) = 90, so a = 90 leaves conv4 with width 0.
  EXPECT_THROW(make_arch(1, 1, 1, 1, 20, BranchPlan{8, 90, 4}), ValidationError);
  EXPECT_NO_THROW(make_arch(1, 1, 1, 1, 20, BranchPlan{8, 89, 4}));
}

TEST(ArchSpec, BranchWidthFormula) {
  EXPECT_EQ(compute_branch_width(256, 1, 0), 256);
  EXPECT_EQ(compute_branch_width(256, 8, 0), 90);
  EXPECT_EQ(compute_branch_width(512, 4, 6), 250);
  EXPECT_EQ(compute_branch_width(256, 4, 0), 128);  // exact square root, no float rounding
  EXPECT_EQ(compute_branch_width(512, 16, 0), 128);
  EXPECT_THROW(compute_branch_width(256, 8, 90), ValidationError);
  EXPECT_THROW(compute_branch_width(0, 1, 0), ValidationError);
}

TEST(ArchSpec, BranchWidthMonotonicity) {
  for (int co : {64, 128, 256, 512}) {
    for (int b = 1; b < 64; ++b) {
      for (int a = 0; a < 8; ++a) {
        int w = 0, wb = 0, wa = 0;
        try {
          w = compute_branch_width(co, b, a);
          wb = compute_branch_width(co, b + 1, a);
          wa = compute_branch_width(co, b, a + 1);
        } catch (const ValidationError&) {
          continue;
        }
        EXPECT_LT(wa, w) << co << " " << b << " " << a;
        // floor(C_o/sqrt(b)) is non-increasing in b; strict whenever the
        // integer part actually moves.
        EXPECT_LE(wb, w) << co << " " << b << " " << a;
      }
    }
  }
  // For the template widths and the power-of-two branch counts used in
  // practice the decrease is strict.
  for (int co : {256, 512}) {
    for (int b = 1; b < 128; b *= 2) {
      EXPECT_LT(compute_branch_width(co, 2 * b, 0), compute_branch_width(co, b, 0));
    }
  }
}

TEST(ArchSpec, EnumerateBlocksCounts) {
  EXPECT_EQ(enumerate_blocks(make_arch(3, 8, 36, 3, 20)).size(), 51u);
  EXPECT_EQ(enumerate_blocks(make_arch(1, 1, 1, 1, 20)).size(), 5u);
  const auto branched = enumerate_blocks(make_arch(1, 1, 1, 1, 20, BranchPlan{8, 0, 4}));
  ASSERT_EQ(branched.size(), 3u + 2u * 8u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(branched[i].branch, -1);
  for (std::size_t i = 3; i < branched.size(); ++i) {
    EXPECT_EQ(branched[i].branch, static_cast<int>((i - 3) % 8));
    EXPECT_EQ(branched[i].phase_index, i < 11 ? 4 : 5);
  }
}

TEST(ArchSpec, EnumerateBlocksOrderAndShapes) {
  const auto blocks = enumerate_blocks(make_arch(3, 8, 36, 3, 20));
  EXPECT_EQ(blocks.front().name(), "conv1");
  EXPECT_EQ(blocks[1].name(), "conv2_1");
  EXPECT_EQ(blocks.back().name(), "conv5_3");
  int previous_out = kStemChannels;
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    EXPECT_EQ(b.out_channels, 4 * b.mid_channels);
    EXPECT_EQ(b.in_channels, previous_out);
    const bool expect_down = b.block_index_in_phase == 1;
    EXPECT_EQ(b.is_downsampling, expect_down) << b.name();
    EXPECT_EQ(b.stride, (b.block_index_in_phase == 1 && b.phase_index >= 3) ? 2 : 1) << b.name();
    previous_out = b.out_channels;
  }
}

TEST(ArchSpec, BlockCountIdentity) {
  for (int x1 = 1; x1 <= 3; ++x1)
    for (int x2 = 1; x2 <= 8; x2 += 3)
      for (int x3 = 1; x3 <= 36; x3 += 7)
        for (int x4 = 1; x4 <= 3; ++x4) {
          const auto spec = make_arch(x1, x2, x3, x4, 10);
          EXPECT_EQ(spec.total_blocks(), 1 + x1 + x2 + x3 + x4);
          EXPECT_EQ(static_cast<int>(enumerate_blocks(spec).size()), spec.total_blocks());
        }
  EXPECT_EQ(max_block_additions(), 2 + 7 + 35 + 2);
}

TEST(ArchSpec, SpatialChainAt128) {
  const auto chain = spatial_chain(make_arch(3, 8, 36, 3, 20));
  EXPECT_EQ(chain, (std::array<int, 5>{32, 32, 16, 8, 4}));
}

TEST(ArchSpec, SearchSpaceSize) {
  EXPECT_EQ(search_space_size(), 2592);
  // Brute force over every tuple make_arch accepts.
  std::int64_t valid = 0;
  for (int x1 = 0; x1 <= 5; ++x1)
    for (int x2 = 0; x2 <= 10; ++x2)
      for (int x3 = 0; x3 <= 40; ++x3)
        for (int x4 = 0; x4 <= 5; ++x4) {
          try {
            make_arch(x1, x2, x3, x4, 2);
            ++valid;
          } catch (const ValidationError&) {
          }
        }
  EXPECT_EQ(valid, 2592);
}

TEST(ArchSpec, TextRoundTrip) {
  const auto spec = make_arch(2, 5, 17, 3, 7, BranchPlan{4, 3, 5}, 96);
  EXPECT_EQ(from_text(to_text(spec)), spec);
  const auto plain = make_arch(1, 1, 1, 1, 20);
  EXPECT_EQ(from_text(to_text(plain)), plain);

  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / (spec.name() + ".arch")).string();
  save_arch(spec, path);
  EXPECT_EQ(load_arch(path), spec);
  std::filesystem::remove(path);
}

TEST(ArchSpec, TextRejectsInconsistentName) {
  EXPECT_THROW(from_text("name=ResNet_1_1_1_1\nblocks=1,2,1,1\nnum_classes=3\ninput_side=64\n"), ValidationError);
  EXPECT_THROW(from_text("blocks=1,1,1\nnum_classes=3\ninput_side=64\n"), ValidationError);
  EXPECT_THROW(from_text("blocks=1,1,1,1\ninput_side=64\n"), ValidationError);
}

TEST(ArchSpec, ParseBlockCounts) {
  EXPECT_EQ(parse_block_counts("3,8,36,3"), (std::array<int, 4>{3, 8, 36, 3}));
  EXPECT_THROW(parse_block_counts("3,8,36"), ValidationError);
  EXPECT_THROW(parse_block_counts("3,8,x,3"), ValidationError);
  EXPECT_THROW(parse_block_counts("3,8,36,3,1"), ValidationError);
}

}  // namespace
}  // namespace rrr
