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

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "rrr/analyzer.hpp"
#include "rrr/errors.hpp"
#include "rrr/rng.hpp"
#include "rrr/surgery.hpp"
#include "rrr/tensor_store.hpp"

namespace rrr {
namespace {

TensorStore small_store() {
  TensorStore s;
  s.add("a.weight", TensorF({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6}));
  s.add("b", TensorF({1}, std::vector<float>{-0.5f}));
  return s;
}

TEST(TensorStore, SerializedLayoutIsBitExact) {
  TensorStore s;
  s.add("ab", TensorF({2}, std::vector<float>{1.0f, -2.0f}));
  const auto bytes = serialize(s);
  const std::string expected =
      std::string("RRRW") + std::string("\x01\x00\x00\x00", 4) + std::string("\x01\x00\x00\x00", 4) +
      std::string("\x02\x00", 2) + "ab" + std::string("\x01", 1) + std::string("\x02\x00\x00\x00", 4) +
      std::string("\x00", 1) + std::string("\x00\x00\x80\x3f", 4) + std::string("\x00\x00\x00\xc0", 4);
  EXPECT_EQ(bytes, expected);
}

TEST(TensorStore, RoundTripRandomStores) {
  Rng rng(7, 0);
  for (int trial = 0; trial < 50; ++trial) {
    TensorStore s;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int t = 0; t < n; ++t) {
      Shape shape;
      const int rank = static_cast<int>(rng.below(5));
      for (int r = 0; r < rank; ++r) shape.push_back(1 + static_cast<int>(rng.below(4)));
      TensorF x(shape);
      for (auto& v : x.data) v = static_cast<float>(rng.normal());
      s.add("t" + std::to_string(trial) + "." + std::to_string(t), std::move(x));
    }
    EXPECT_EQ(deserialize(serialize(s)), s);
  }
}

TEST(TensorStore, SaveLoadFile) {
  const auto s = small_store();
  const auto path = (std::filesystem::temp_directory_path() / "rrr_store_roundtrip.rrrw").string();
  save(s, path);
  EXPECT_EQ(load(path), s);
  std::filesystem::remove(path);
  EXPECT_THROW(load(path), FormatError);
}

TEST(TensorStore, RejectsCorruptFiles) {
  const auto bytes = serialize(small_store());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(deserialize(bad_version), FormatError);
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    EXPECT_THROW(deserialize(std::string_view(bytes).substr(0, cut)), FormatError) << cut;
  }
  EXPECT_THROW(deserialize(bytes + "x"), FormatError);
}

TEST(TensorStore, RejectsDuplicatesAndMismatch) {
  auto s = small_store();
  EXPECT_THROW(s.add("b", TensorF({1})), FormatError);
  TensorF broken({2, 2});
  broken.data.pop_back();
  EXPECT_THROW(s.add("c", broken), FormatError);
  EXPECT_THROW(s.get("missing"), FormatError);

  // Duplicate names inside a file are a format error too.
  TensorStore one;
  one.add("x", TensorF({1}, std::vector<float>{3}));
  auto bytes = serialize(one);
  auto body = bytes.substr(12);
  bytes[8] = 2;
  EXPECT_THROW(deserialize(bytes + body), FormatError);
}

TEST(TensorStore, ParamCountSkipsBuffers) {
  const auto spec = make_arch(1, 1, 1, 1, 20);
  const auto store = init_store(spec, 1);
  EXPECT_EQ(count_store_params(store), total_params(spec));
  EXPECT_TRUE(names::is_buffer("bn1.running_mean"));
  EXPECT_TRUE(names::is_buffer("input.std"));
  EXPECT_FALSE(names::is_buffer("bn1.weight"));
}

// ---- surgery -------------------------------------------------------------

class TemplateStore : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { full_ = new TensorStore(init_store(make_arch(3, 8, 36, 3, 20), 42)); }
  static void TearDownTestSuite() {
    delete full_;
    full_ = nullptr;
  }
  static TensorStore* full_;
};
TensorStore* TemplateStore::full_ = nullptr;

TEST_F(TemplateStore, ExtractMinimalKeepsFirstBlocksOnly) {
  const auto minimal = make_arch(1, 1, 1, 1, 20);
  const auto reduced = extract_reduced(*full_, minimal, 5);
  std::set<std::string> prefixes;
  for (const auto& name : reduced.names()) prefixes.insert(name.substr(0, name.find('.')));
  EXPECT_EQ(prefixes, (std::set<std::string>{"bn1", "conv1", "conv2_1", "conv3_1", "conv4_1", "conv5_1", "fc",
                                             "input"}));
  EXPECT_EQ(count_store_params(reduced), total_params(minimal));
  EXPECT_EQ(reduced.get("conv4_1.conv2.weight"), full_->get("conv4_1.conv2.weight"));
}

TEST_F(TemplateStore, ExtractPreservesBlockIdentity) {
  const auto spec = make_arch(2, 3, 5, 1, 20);
  const auto reduced = extract_reduced(*full_, spec, 5);
  EXPECT_EQ(count_store_params(reduced), total_params(spec));
  EXPECT_EQ(reduced.get("conv4_5.conv1.weight"), full_->get("conv4_5.conv1.weight"));
  EXPECT_FALSE(reduced.contains("conv4_6.conv1.weight"));
  const auto full = extract_reduced(*full_, make_arch(3, 8, 36, 3, 20), 5);
  EXPECT_EQ(full.size(), full_->size());
  EXPECT_EQ(count_store_params(full), total_params(make_arch(3, 8, 36, 3, 20)));
}

TEST(Surgery, ExtractMissingBlockFails) {
  const auto store = init_store(make_arch(1, 1, 1, 1, 5), 3);
  EXPECT_THROW(extract_reduced(store, make_arch(1, 2, 1, 1, 5)), FormatError);
}

TEST(Surgery, SolveBudgetOffsetIsMinimal) {
  const auto base = make_arch(1, 1, 1, 1, 20);
  const auto budget = total_params(base);
  // Expected offsets come from an independent ascending scan.
  const std::map<int, int> expected = {{1, 0}, {2, 6}, {4, 9}, {8, 11}, {16, 13}};
  for (const auto& [b, a_expected] : expected) {
    const int a = solve_budget_offset(base, b);
    EXPECT_EQ(a, a_expected) << b;
    auto spec = base;
    spec.branch_plan = BranchPlan{b, a, 4};
    EXPECT_LE(total_params(spec), budget);
    if (a > 0) {
      spec.branch_plan->budget_offset = a - 1;
      EXPECT_GT(total_params(spec), budget) << b;
    }
  }
}

TEST(Surgery, IndexListExactPartition) {
  const auto idx = split_channel_indices(64, 16, 4, 99, 1);
  ASSERT_EQ(idx.size(), 64u);
  for (int i = 0; i < 64; ++i) EXPECT_EQ(idx[static_cast<std::size_t>(i)], i);
  const auto prefix = split_channel_indices(100, 10, 3, 99, 1);
  ASSERT_EQ(prefix.size(), 30u);
  for (int i = 0; i < 30; ++i) EXPECT_EQ(prefix[static_cast<std::size_t>(i)], i);
}

TEST(Surgery, IndexListRecycling) {
  const auto idx = split_channel_indices(8, 4, 4, 123, 2);
  ASSERT_EQ(idx.size(), 16u);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(idx[static_cast<std::size_t>(i)], i);
  auto tail = std::vector<int>(idx.begin() + 8, idx.end());
  std::sort(tail.begin(), tail.end());
  for (int i = 0; i < 8; ++i) EXPECT_EQ(tail[static_cast<std::size_t>(i)], i);
}

TEST(Surgery, IndexListMultiplicitiesDifferByAtMostOne) {
  Rng rng(2024, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const int co = 1 + static_cast<int>(rng.below(64));
    const int cb = 1 + static_cast<int>(rng.below(64));
    const int n = 1 + static_cast<int>(rng.below(16));
    const auto idx = split_channel_indices(co, cb, n, rng.next_u64(), static_cast<std::uint64_t>(trial));
    ASSERT_EQ(idx.size(), static_cast<std::size_t>(cb * n));
    std::vector<int> count(static_cast<std::size_t>(co), 0);
    for (int i : idx) ++count[static_cast<std::size_t>(i)];
    if (co >= cb * n) continue;
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    EXPECT_LE(*hi - *lo, 1) << co << " " << cb << " " << n;
  }
}

TEST(Surgery, IndexListDependsOnLayerKeyNotOrder) {
  const auto a = split_channel_indices(8, 3, 5, 11, 4001);
  const auto b = split_channel_indices(8, 3, 5, 11, 4001);
  const auto c = split_channel_indices(8, 3, 5, 11, 4011);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST_F(TemplateStore, SplitMinimalEightBranchesMeetsBudget) {
  const auto minimal = make_arch(1, 1, 1, 1, 20);
  const auto reduced = extract_reduced(*full_, minimal, 5);
  const int a = solve_budget_offset(minimal, 8);
  auto spec = minimal;
  spec.branch_plan = BranchPlan{8, a, 4};
  const auto split = split_kernels(reduced, spec, 17);
  EXPECT_EQ(count_store_params(split), total_params(spec));
  EXPECT_LE(count_store_params(split), count_store_params(reduced));
  // Stump passes through untouched.
  for (const auto& name : names_with_prefix(reduced, "conv3_1")) EXPECT_EQ(split.get(name), reduced.get(name));
  EXPECT_EQ(split.get("conv1.weight"), reduced.get("conv1.weight"));
  // Shape soundness of one branch.
  const int cb = compute_branch_width(256, 8, a);
  EXPECT_EQ(split.get("conv4_1.branch3.conv1.weight").shape, (Shape{cb, 512, 1, 1}));
  EXPECT_EQ(split.get("conv4_1.branch3.conv3.weight").shape, (Shape{4 * cb, cb, 1, 1}));
  EXPECT_EQ(split.get("conv4_1.branch3.proj.weight").shape, (Shape{4 * cb, 512, 1, 1}));
  const int cb5 = compute_branch_width(512, 8, a);
  EXPECT_EQ(split.get("conv5_1.branch3.conv1.weight").shape, (Shape{cb5, 4 * cb, 1, 1}));
  EXPECT_EQ(split.get("conv5_1.branch3.proj.weight").shape, (Shape{4 * cb5, 4 * cb, 1, 1}));
  EXPECT_EQ(split.get("fc.branch7.weight").shape, (Shape{20, 4 * cb5}));
}

TEST(Surgery, SplitSlicesMatchIndexLists) {
  const auto spec = make_arch(1, 1, 2, 1, 6);
  const auto widths = WidthConfig::scaled_down(8);
  const auto store = init_store(spec, 9, widths);
  auto branched = spec;
  branched.branch_plan = BranchPlan{3, 1, 4};
  const auto split = split_kernels(store, branched, 31);
  const int mid_o = 32, cb = compute_branch_width(mid_o, 3, 1);
  const auto stream = split_channel_indices(4 * mid_o, 4 * cb, 3, 31, 4000);
  const auto m1 = split_channel_indices(mid_o, cb, 3, 31, 4021);
  const auto m2 = split_channel_indices(mid_o, cb, 3, 31, 4022);
  const auto& src = store.get("conv4_2.conv2.weight");
  const auto& dst = split.get("conv4_2.branch2.conv2.weight");
  ASSERT_EQ(dst.shape, (Shape{cb, cb, 3, 3}));
  for (int o = 0; o < cb; ++o)
    for (int x = 0; x < cb; ++x)
      for (int k = 0; k < 9; ++k) {
        const auto so = static_cast<std::size_t>(m2[static_cast<std::size_t>(2 * cb + o)]);
        const auto si = static_cast<std::size_t>(m1[static_cast<std::size_t>(2 * cb + x)]);
        EXPECT_EQ(dst[(static_cast<std::size_t>(o) * cb + x) * 9 + k], src[(so * mid_o + si) * 9 + k]);
      }
  // The second block's reduce conv reads the stream channels of its branch.
  const auto& r_src = store.get("conv4_2.conv1.weight");
  const auto& r_dst = split.get("conv4_2.branch1.conv1.weight");
  ASSERT_EQ(r_dst.shape, (Shape{cb, 4 * cb, 1, 1}));
  for (int o = 0; o < cb; ++o)
    for (int x = 0; x < 4 * cb; ++x) {
      const auto so = static_cast<std::size_t>(m1[static_cast<std::size_t>(cb + o)]);
      const auto si = static_cast<std::size_t>(stream[static_cast<std::size_t>(4 * cb + x)]);
      EXPECT_EQ(r_dst[static_cast<std::size_t>(o) * 4 * cb + x], r_src[so * 4 * mid_o + si]);
    }
  const auto& bn_src = store.get("conv4_1.bn3.running_var");
  const auto& bn_dst = split.get("conv4_1.branch0.bn3.running_var");
  for (int c = 0; c < 4 * cb; ++c) EXPECT_EQ(bn_dst[static_cast<std::size_t>(c)], bn_src[static_cast<std::size_t>(stream[static_cast<std::size_t>(c)])]);
}

TEST(Surgery, SplitIsDeterministic) {
  const auto spec = make_arch(1, 2, 2, 2, 4);
  const auto store = init_store(spec, 3, WidthConfig::scaled_down(16));
  auto branched = spec;
  branched.branch_plan = BranchPlan{5, 0, 4};
  EXPECT_EQ(serialize(split_kernels(store, branched, 8)), serialize(split_kernels(store, branched, 8)));
  EXPECT_NE(serialize(split_kernels(store, branched, 8)), serialize(split_kernels(store, branched, 9)));
}

TEST(Surgery, SingleBranchIsIdentityOnTail) {
  const auto spec = make_arch(1, 1, 2, 2, 4);
  const auto store = init_store(spec, 3, WidthConfig::scaled_down(4));
  auto branched = spec;
  branched.branch_plan = BranchPlan{1, 0, 4};
  const auto split = split_kernels(store, branched, 8);
  for (const auto& [name, tensor] : store.entries()) {
    if (name.rfind("fc.", 0) == 0) continue;
    auto mapped = name;
    if (name.rfind("conv4_", 0) == 0 || name.rfind("conv5_", 0) == 0) {
      const auto dot = name.find('.');
      mapped = name.substr(0, dot) + ".branch0" + name.substr(dot);
    }
    EXPECT_EQ(split.get(mapped), tensor) << name;
  }
}

TEST(Surgery, SplitAtPhaseFiveKeepsConv4Shared) {
  const auto spec = make_arch(1, 1, 1, 2, 4);
  const auto store = init_store(spec, 3, WidthConfig::scaled_down(8));
  auto branched = spec;
  branched.branch_plan = BranchPlan{4, 0, 5};
  const auto split = split_kernels(store, branched, 8);
  EXPECT_EQ(split.get("conv4_1.conv1.weight"), store.get("conv4_1.conv1.weight"));
  EXPECT_TRUE(split.contains("conv5_2.branch3.conv3.weight"));
  EXPECT_FALSE(split.contains("conv4_1.branch0.conv1.weight"));
}

TEST(Surgery, SplitRejectsUnbranchedSpec) {
  const auto spec = make_arch(1, 1, 1, 1, 4);
  const auto store = init_store(spec, 3, WidthConfig::scaled_down(8));
  EXPECT_THROW(split_kernels(store, spec, 1), ValidationError);
}

TEST(Surgery, InitStoreSharesTensorsAcrossSpecs) {
  const auto small = init_store(make_arch(1, 1, 1, 1, 4), 5, WidthConfig::scaled_down(8));
  const auto larger = init_store(make_arch(2, 2, 2, 2, 4), 5, WidthConfig::scaled_down(8));
  EXPECT_EQ(small.get("conv3_1.conv2.weight"), larger.get("conv3_1.conv2.weight"));
}

}  // namespace
}  // namespace rrr
