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
#include "rrr/prune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rrr/errors.hpp"
#include "rrr/rng.hpp"
#include "rrr/surgery.hpp"

namespace rrr {
namespace {

bool is_conv_weight(const std::string& name, const TensorF& t) {
  return t.rank() == 4 && name.ends_with(".weight");
}

double realized(std::int64_t kept, std::int64_t base) {
  return 1.0 - static_cast<double>(kept) / static_cast<double>(base);
}

// ---- element ---------------------------------------------------------------

PruneResult prune_elements(const ArchSpec& spec, const TensorStore& store, const PruneSpec& p) {
  std::vector<std::size_t> layers;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < store.entries().size(); ++i) {
    const auto& [name, t] = store.entries()[i];
    if (is_conv_weight(name, t)) {
      layers.push_back(i);
      n += static_cast<std::int64_t>(t.size());
    }
  }
  const auto target = static_cast<std::int64_t>(std::floor(p.sparsity * static_cast<double>(n)));

  // Largest-remainder apportionment of the global zero count.
  std::vector<std::int64_t> zeros(layers.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const double share = static_cast<double>(target) *
                         static_cast<double>(store.entries()[layers[l]].second.size()) / static_cast<double>(n);
    zeros[l] = static_cast<std::int64_t>(std::floor(share));
    assigned += zeros[l];
    remainders.emplace_back(share - std::floor(share), l);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::int64_t r = 0; r < target - assigned; ++r) ++zeros[remainders[static_cast<std::size_t>(r)].second];

  TensorStore out = store;
  std::vector<std::uint32_t> perm;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& name = store.entries()[layers[l]].first;
    auto& t = out.get_mut(name);
    perm.resize(t.size());
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng(p.seed, l);
    // Partial Fisher-Yates: the first zeros[l] positions are a uniform sample.
    for (std::size_t i = 0; i < static_cast<std::size_t>(zeros[l]); ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(perm.size() - i));
      std::swap(perm[i], perm[j]);
      t.data[perm[i]] = 0.0f;
    }
  }
  const auto base = count_store_params(store);
  return {spec, std::move(out), static_cast<double>(target) / static_cast<double>(base)};
}

// ---- channel ---------------------------------------------------------------

struct Roles {
  std::string out, in;  // channel groups of dims 0 and 1; empty = untouched
};

std::string stream_group(int phase) { return phase == 1 ? "stem" : "stream" + std::to_string(phase); }

// Maps a tensor name onto the coupled channel groups of its dimensions.
Roles roles_of(const std::string& name) {
  if (name == "conv1.weight") return {"stem", ""};
  if (name.starts_with("bn1.")) return {"stem", ""};
  if (name == "fc.weight") return {"", stream_group(kLastPhase)};
  if (name == "fc.bias" || name.starts_with("input.")) return {"", ""};
  const auto dot = name.find('.');
  const auto block = name.substr(0, dot);
  const auto rest = name.substr(dot + 1);
  const auto us = block.find('_');
  if (!block.starts_with("conv") || us == std::string::npos || rest.starts_with("branch")) {
    throw ValidationError("channel pruning does not know tensor '" + name + "'");
  }
  const int phase = std::stoi(block.substr(4, us - 4));
  const int index = std::stoi(block.substr(us + 1));
  const auto stream = stream_group(phase);
  const auto in_stream = index == 1 ? stream_group(phase - 1) : stream;
  const auto m1 = block + ".mid1", m2 = block + ".mid2";
  if (rest == "conv1.weight") return {m1, in_stream};
  if (rest.starts_with("bn1.")) return {m1, ""};
  if (rest == "conv2.weight") return {m2, m1};
  if (rest.starts_with("bn2.")) return {m2, ""};
  if (rest == "conv3.weight") return {stream, m2};
  if (rest.starts_with("bn3.") || rest.starts_with("proj_bn.")) return {stream, ""};
  if (rest == "proj.weight") return {stream, in_stream};
  throw ValidationError("channel pruning does not know tensor '" + name + "'");
}

struct GroupInfo {
  int width = 0;
  std::uint64_t key = 0;
};

std::map<std::string, GroupInfo> collect_groups(const TensorStore& store) {
  std::map<std::string, GroupInfo> groups;
  for (const auto& [name, t] : store.entries()) {
    const auto r = roles_of(name);
    if (!r.out.empty()) groups[r.out].width = t.dim(0);
  }
  std::uint64_t key = 0;
  for (auto& [_, g] : groups) g.key = key++;
  return groups;
}

int keep_count(int width, double ratio) {
  return std::clamp(static_cast<int>(std::lround(ratio * width)), 1, width);
}

std::int64_t count_with_ratio(const TensorStore& store, const std::map<std::string, GroupInfo>& groups,
                              double ratio) {
  std::int64_t total = 0;
  for (const auto& [name, t] : store.entries()) {
    if (names::is_buffer(name)) continue;
    const auto r = roles_of(name);
    std::int64_t size = static_cast<std::int64_t>(t.size());
    if (!r.out.empty()) size = size / t.dim(0) * keep_count(groups.at(r.out).width, ratio);
    if (!r.in.empty()) size = size / t.dim(1) * keep_count(groups.at(r.in).width, ratio);
    total += size;
  }
  return total;
}

TensorF slice_dims(const TensorF& t, const std::vector<int>* d0, const std::vector<int>* d1) {
  if (t.rank() == 1) {
    TensorF out({static_cast<int>(d0->size())});
    for (std::size_t i = 0; i < d0->size(); ++i) out[i] = t[static_cast<std::size_t>((*d0)[i])];
    return out;
  }
  const int rows = t.dim(0), cols = t.dim(1);
  const std::size_t inner = t.size() / (static_cast<std::size_t>(rows) * cols);
  std::vector<int> all0, all1;
  if (!d0) {
    all0.resize(static_cast<std::size_t>(rows));
    std::iota(all0.begin(), all0.end(), 0);
    d0 = &all0;
  }
  if (!d1) {
    all1.resize(static_cast<std::size_t>(cols));
    std::iota(all1.begin(), all1.end(), 0);
    d1 = &all1;
  }
  Shape shape = t.shape;
  shape[0] = static_cast<int>(d0->size());
  shape[1] = static_cast<int>(d1->size());
  TensorF out(shape);
  float* dst = out.ptr();
  for (int r : *d0)
    for (int c : *d1) {
      const float* src = t.ptr() + (static_cast<std::size_t>(r) * cols + c) * inner;
      dst = std::copy_n(src, inner, dst);
    }
  return out;
}

PruneResult prune_channels(const ArchSpec& spec, const TensorStore& store, const PruneSpec& p) {
  const auto groups = collect_groups(store);
  const auto base = count_store_params(store);

  // realized(ratio) is non-increasing in ratio; bisect for the request.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (realized(count_with_ratio(store, groups, mid), base) > p.sparsity) lo = mid; else hi = mid;
  }
  double ratio = hi;
  const double s_hi = realized(count_with_ratio(store, groups, hi), base);
  const double s_lo = realized(count_with_ratio(store, groups, lo), base);
  if (std::abs(s_lo - p.sparsity) < std::abs(s_hi - p.sparsity)) ratio = lo;
  const double got = realized(count_with_ratio(store, groups, ratio), base);
  if (std::abs(got - p.sparsity) > kSparsityTolerance) {
    throw ValidationError("channel sparsity " + std::to_string(p.sparsity) + " is unreachable (nearest " +
                          std::to_string(got) + ")");
  }

  std::map<std::string, std::vector<int>> keep;
  for (const auto& [group, info] : groups) {
    std::vector<int> idx(static_cast<std::size_t>(info.width));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(p.seed, info.key);
    rng.shuffle(std::span<int>(idx));
    idx.resize(static_cast<std::size_t>(keep_count(info.width, ratio)));
    std::sort(idx.begin(), idx.end());
    keep[group] = std::move(idx);
  }

  TensorStore out;
  for (const auto& [name, t] : store.entries()) {
    const auto r = roles_of(name);
    if (r.out.empty() && r.in.empty()) {
      out.add(name, t);
      continue;
    }
    const std::vector<int>* rows = r.out.empty() ? nullptr : &keep.at(r.out);
    const std::vector<int>* cols = r.in.empty() ? nullptr : &keep.at(r.in);
    out.add(name, slice_dims(t, rows, cols));
  }
  const double achieved = realized(count_store_params(out), base);
  return {spec, std::move(out), achieved};
}

// ---- block -----------------------------------------------------------------

ArchSpec without_blocks(const ArchSpec& spec, const std::vector<std::pair<int, int>>& order, std::size_t removed) {
  ArchSpec s = spec;
  for (std::size_t r = 0; r < removed; ++r) {
    const auto [phase, index] = order[order.size() - 1 - r];
    (void)index;
    --s.blocks_per_phase[static_cast<std::size_t>(phase - kFirstBottleneckPhase)];
  }
  return s;
}

PruneResult prune_blocks(const ArchSpec& spec, const TensorStore& store, const PruneSpec& p) {
  const auto order = block_fill_order(spec);
  const auto base = count_store_params(store);
  std::int64_t kept = base;
  std::size_t best = 0;
  double best_gap = std::abs(p.sparsity);
  double best_sparsity = 0.0;
  for (std::size_t r = 1; r <= order.size(); ++r) {
    const auto [phase, index] = order[order.size() - r];
    for (const auto& name : names_with_prefix(store, names::block(phase, index))) {
      if (!names::is_buffer(name)) kept -= static_cast<std::int64_t>(store.get(name).size());
    }
    const double s = realized(kept, base);
    if (std::abs(s - p.sparsity) < best_gap) {
      best_gap = std::abs(s - p.sparsity);
      best = r;
      best_sparsity = s;
    }
  }
  const double max_sparsity = realized(kept, base);
  if (p.sparsity > max_sparsity + kBlockSparsitySlack) {
    throw ValidationError("block sparsity " + std::to_string(p.sparsity) + " exceeds the maximum " +
                          std::to_string(max_sparsity) + " reachable by removing blocks");
  }
  const auto reduced = without_blocks(spec, order, best);
  return {reduced, keep_blocks(store, reduced), best_sparsity};
}

}  // namespace

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::kElement: return "element";
    case Granularity::kChannel: return "channel";
    case Granularity::kBlock: return "block";
  }
  return "?";
}

Granularity parse_granularity(const std::string& s) {
  if (s == "element") return Granularity::kElement;
  if (s == "channel") return Granularity::kChannel;
  if (s == "block") return Granularity::kBlock;
  throw ValidationError("unknown granularity '" + s + "' (expected element, channel or block)");
}

std::vector<std::pair<int, int>> block_fill_order(const ArchSpec& spec) {
  std::vector<std::pair<int, int>> order;
  for (int phase = kFirstBottleneckPhase; phase <= kLastPhase; ++phase) {
    for (int i = 2; i <= spec.blocks_per_phase[static_cast<std::size_t>(phase - kFirstBottleneckPhase)]; ++i) {
      order.emplace_back(phase, i);
    }
  }
  return order;
}

PruneResult apply_prune(const ArchSpec& spec, const TensorStore& store, const PruneSpec& prune) {
  if (spec.branch_plan) throw ValidationError("pruning expects an unbranched spec");
  if (!(prune.sparsity >= 0.0 && prune.sparsity <= 1.0)) {
    throw ValidationError("sparsity must lie in [0, 1]");
  }
  spec.validate();
  if (prune.sparsity == 0.0) return {spec, store, 0.0};
  switch (prune.granularity) {
    case Granularity::kElement: return prune_elements(spec, store, prune);
    case Granularity::kChannel: return prune_channels(spec, store, prune);
    case Granularity::kBlock: return prune_blocks(spec, store, prune);
  }
  throw ValidationError("unknown granularity");
}

}  // namespace rrr
