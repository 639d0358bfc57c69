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
#include "rrr/surgery.hpp"

#include <cmath>
#include <numeric>
#include <optional>

#include "rrr/analyzer.hpp"
#include "rrr/errors.hpp"
#include "rrr/rng.hpp"

namespace rrr {
namespace {

constexpr std::array<float, 3> kImageNetMean = {0.485f, 0.456f, 0.406f};
constexpr std::array<float, 3> kImageNetStd = {0.229f, 0.224f, 0.225f};

constexpr const char* kBnFields[] = {"weight", "bias", "running_mean", "running_var"};

std::uint64_t name_key(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void add_conv(TensorStore& store, const std::string& name, int co, int ci, int k, std::uint64_t seed) {
  Rng rng(seed, name_key(name));
  const double stddev = std::sqrt(2.0 / (ci * k * k));
  TensorF w({co, ci, k, k});
  for (auto& v : w.data) v = static_cast<float>(rng.normal() * stddev);
  store.add(name, std::move(w));
}

// Residual-branch BNs (bn3) get a small scale so deep random stacks keep
// bounded activations, the way trained ResNets do.
void add_bn(TensorStore& store, const std::string& prefix, int c, std::uint64_t seed, bool residual_out) {
  Rng rng(seed, name_key(prefix));
  TensorF gamma({c}), beta({c}), mean({c}), var({c});
  for (int i = 0; i < c; ++i) {
    gamma[i] = static_cast<float>(residual_out ? rng.uniform(0.1, 0.3) : rng.uniform(0.8, 1.2));
    beta[i] = static_cast<float>(rng.normal() * 0.05);
    mean[i] = static_cast<float>(rng.normal() * 0.1);
    var[i] = static_cast<float>(rng.uniform(0.5, 1.5));
  }
  store.add(prefix + ".weight", std::move(gamma));
  store.add(prefix + ".bias", std::move(beta));
  store.add(prefix + ".running_mean", std::move(mean));
  store.add(prefix + ".running_var", std::move(var));
}

void add_block(TensorStore& store, const std::string& prefix, int in, int mid, bool projection,
               std::uint64_t seed) {
  const int out = kExpansion * mid;
  add_conv(store, prefix + ".conv1.weight", mid, in, 1, seed);
  add_bn(store, prefix + ".bn1", mid, seed, false);
  add_conv(store, prefix + ".conv2.weight", mid, mid, 3, seed);
  add_bn(store, prefix + ".bn2", mid, seed, false);
  add_conv(store, prefix + ".conv3.weight", out, mid, 1, seed);
  add_bn(store, prefix + ".bn3", out, seed, true);
  if (projection) {
    add_conv(store, prefix + ".proj.weight", out, in, 1, seed);
    add_bn(store, prefix + ".proj_bn", out, seed, false);
  }
}

void add_input_constants(TensorStore& store) {
  store.add(std::string(names::kInputMean), TensorF({3}, std::vector<float>(kImageNetMean.begin(), kImageNetMean.end())));
  store.add(std::string(names::kInputStd), TensorF({3}, std::vector<float>(kImageNetStd.begin(), kImageNetStd.end())));
}

void copy_entry(const TensorStore& from, TensorStore& to, const std::string& name) {
  to.add(name, from.get(name));
}

void copy_prefix(const TensorStore& from, TensorStore& to, const std::string& prefix) {
  const auto matched = names_with_prefix(from, prefix);
  if (matched.empty()) throw FormatError("missing tensors for '" + prefix + "'");
  for (const auto& n : matched) copy_entry(from, to, n);
}

void copy_stem(const TensorStore& from, TensorStore& to) {
  copy_entry(from, to, "conv1.weight");
  for (auto f : kBnFields) copy_entry(from, to, std::string("bn1.") + f);
}

void copy_input_constants(const TensorStore& from, TensorStore& to) {
  copy_entry(from, to, std::string(names::kInputMean));
  copy_entry(from, to, std::string(names::kInputStd));
}

// out[o', x', :, :] = in[out_idx[o'], in_idx[x'], :, :]; empty in_idx keeps
// every input channel.
TensorF slice_conv(const TensorF& w, const std::string& name, std::span<const int> out_idx,
                   std::span<const int> in_idx) {
  if (w.rank() != 4) throw ShapeError("tensor '" + name + "' is not a 4-d conv weight");
  const int co = w.dim(0), ci = w.dim(1), kk = w.dim(2) * w.dim(3);
  const int new_in = in_idx.empty() ? ci : static_cast<int>(in_idx.size());
  TensorF out({static_cast<int>(out_idx.size()), new_in, w.dim(2), w.dim(3)});
  for (std::size_t o = 0; o < out_idx.size(); ++o) {
    if (out_idx[o] < 0 || out_idx[o] >= co) throw ShapeError("output index out of range for '" + name + "'");
    for (int x = 0; x < new_in; ++x) {
      const int src_in = in_idx.empty() ? x : in_idx[static_cast<std::size_t>(x)];
      if (src_in < 0 || src_in >= ci) throw ShapeError("input index out of range for '" + name + "'");
      const float* src = w.ptr() + (static_cast<std::size_t>(out_idx[o]) * ci + src_in) * kk;
      float* dst = out.ptr() + (o * new_in + x) * kk;
      std::copy_n(src, kk, dst);
    }
  }
  return out;
}

TensorF slice_vector(const TensorF& v, const std::string& name, std::span<const int> idx) {
  if (v.rank() != 1) throw ShapeError("tensor '" + name + "' is not 1-d");
  TensorF out({static_cast<int>(idx.size())});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= v.dim(0)) throw ShapeError("index out of range for '" + name + "'");
    out[i] = v[static_cast<std::size_t>(idx[i])];
  }
  return out;
}

void add_sliced_conv(const TensorStore& from, TensorStore& to, const std::string& src_prefix,
                     const std::string& dst_prefix, std::span<const int> out_idx, std::span<const int> in_idx) {
  const auto name = src_prefix + ".weight";
  to.add(dst_prefix + ".weight", slice_conv(from.get(name), name, out_idx, in_idx));
}

void add_sliced_bn(const TensorStore& from, TensorStore& to, const std::string& src_prefix,
                   const std::string& dst_prefix, std::span<const int> idx) {
  for (auto f : kBnFields) {
    const auto name = src_prefix + "." + f;
    to.add(dst_prefix + "." + f, slice_vector(from.get(name), name, idx));
  }
}

int store_out_channels(const TensorStore& store, const std::string& name) {
  return store.get(name).dim(0);
}

}  // namespace

WidthConfig WidthConfig::scaled_down(int divisor) {
  if (divisor < 1 || kStemChannels % divisor != 0) throw ValidationError("width divisor must divide 64");
  WidthConfig w;
  w.stem = kStemChannels / divisor;
  for (int i = 0; i < kNumPhases; ++i) w.mids[i] = kTemplateMidWidths[i] / divisor;
  return w;
}

void add_fresh_head(TensorStore& store, const std::string& prefix, int features, int num_classes,
                    std::uint64_t seed) {
  Rng rng(seed, name_key(prefix + ".head"));
  const double bound = 1.0 / std::sqrt(static_cast<double>(features));
  TensorF w({num_classes, features});
  for (auto& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
  store.add(prefix + ".weight", std::move(w));
  store.add(prefix + ".bias", TensorF({num_classes}, 0.0f));
}

TensorStore init_store(const ArchSpec& spec, std::uint64_t seed, const WidthConfig& widths) {
  spec.validate();
  TensorStore store;
  add_conv(store, "conv1.weight", widths.stem, kImageChannels, 7, seed);
  add_bn(store, "bn1", widths.stem, seed, false);

  const int b = spec.num_branches();
  std::vector<int> channels(static_cast<std::size_t>(b), widths.stem);
  for (int phase = kFirstBottleneckPhase; phase <= kLastPhase; ++phase) {
    const int p = phase - kFirstBottleneckPhase;
    const bool branched = spec.is_branched_phase(phase);
    const int mid = branched ? spec.branch_plan->branch_width(widths.mids[p]) : widths.mids[p];
    for (int i = 1; i <= spec.blocks_per_phase[p]; ++i) {
      if (!branched) {
        add_block(store, names::block(phase, i), channels[0], mid, i == 1, seed);
        std::fill(channels.begin(), channels.end(), kExpansion * mid);
        continue;
      }
      for (int br = 0; br < b; ++br) {
        add_block(store, names::block(phase, i, br), channels[br], mid, i == 1, seed);
        channels[br] = kExpansion * mid;
      }
    }
  }
  if (spec.branch_plan) {
    for (int br = 0; br < b; ++br) add_fresh_head(store, names::head(br), channels[br], spec.num_classes, seed);
  } else {
    add_fresh_head(store, names::head(), channels[0], spec.num_classes, seed);
  }
  add_input_constants(store);
  return store;
}

TensorStore keep_blocks(const TensorStore& store, const ArchSpec& spec) {
  if (spec.branch_plan) throw ValidationError("keep_blocks expects an unbranched spec");
  spec.validate();
  TensorStore out;
  copy_stem(store, out);
  for (int phase = kFirstBottleneckPhase; phase <= kLastPhase; ++phase) {
    for (int i = 1; i <= spec.blocks_per_phase[phase - kFirstBottleneckPhase]; ++i) {
      copy_prefix(store, out, names::block(phase, i));
    }
  }
  for (const auto& n : names_with_prefix(store, names::head())) copy_entry(store, out, n);
  copy_input_constants(store, out);
  return out;
}

TensorStore extract_reduced(const TensorStore& store, const ArchSpec& spec, std::uint64_t head_seed) {
  if (spec.branch_plan) throw ValidationError("extract_reduced expects an unbranched spec");
  spec.validate();
  TensorStore out;
  copy_stem(store, out);
  int features = 0;
  for (int phase = kFirstBottleneckPhase; phase <= kLastPhase; ++phase) {
    for (int i = 1; i <= spec.blocks_per_phase[phase - kFirstBottleneckPhase]; ++i) {
      const auto prefix = names::block(phase, i);
      copy_prefix(store, out, prefix);
      features = store_out_channels(store, prefix + ".conv3.weight");
    }
  }
  add_fresh_head(out, names::head(), features, spec.num_classes, head_seed);
  copy_input_constants(store, out);
  return out;
}

int solve_budget_offset(const ArchSpec& spec, int num_branches, int split_phase) {
  if (num_branches < 1) throw ValidationError("num_branches must be positive");
  const ArchSpec base = spec.unbranched();
  base.validate();
  const auto budget = total_params(base);
  const int widest = kTemplateMidWidths[static_cast<std::size_t>(split_phase - kFirstBottleneckPhase)];
  for (int a = 0; a <= widest; ++a) {
    ArchSpec candidate = base;
    candidate.branch_plan = BranchPlan{num_branches, a, split_phase};
    try {
      candidate.validate();
    } catch (const ValidationError&) {
      break;  // widths only shrink as a grows
    }
    if (total_params(candidate) <= budget) return a;
  }
  throw ValidationError("no budget offset keeps " + std::to_string(num_branches) +
                        " branches within the parameter budget of " + base.name());
}

std::vector<int> split_channel_indices(int pretrained_out, int branch_out, int num_branches,
                                       std::uint64_t seed, std::uint64_t layer_key) {
  if (pretrained_out < 1 || branch_out < 1 || num_branches < 1) {
    throw ValidationError("split_channel_indices needs positive widths and branch count");
  }
  const std::size_t needed = static_cast<std::size_t>(branch_out) * static_cast<std::size_t>(num_branches);
  std::vector<int> indices;
  indices.reserve(needed + static_cast<std::size_t>(pretrained_out));
  if (static_cast<std::size_t>(pretrained_out) >= needed) {
    for (std::size_t i = 0; i < needed; ++i) indices.push_back(static_cast<int>(i));
    return indices;
  }
  for (int i = 0; i < pretrained_out; ++i) indices.push_back(i);
  Rng rng(seed, layer_key);
  std::vector<int> perm(static_cast<std::size_t>(pretrained_out));
  while (indices.size() < needed) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<int>(perm));
    indices.insert(indices.end(), perm.begin(), perm.end());
  }
  indices.resize(needed);
  return indices;
}

TensorStore split_kernels(const TensorStore& store, const ArchSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (!spec.branch_plan) throw ValidationError("split_kernels needs a spec with a branch plan");
  const auto& plan = *spec.branch_plan;
  const int nb = plan.num_branches;

  TensorStore out;
  copy_stem(store, out);
  for (int phase = kFirstBottleneckPhase; phase < plan.split_phase; ++phase) {
    for (int i = 1; i <= spec.blocks_per_phase[phase - kFirstBottleneckPhase]; ++i) {
      copy_prefix(store, out, names::block(phase, i));
    }
  }

  // Index sets per branch for the tensor currently feeding the next layer.
  // Empty means "all pretrained channels" (the shared stump output).
  std::vector<std::vector<int>> stream_in(static_cast<std::size_t>(nb));
  auto slice_of = [](const std::vector<int>& idx, int width, int br) {
    return std::vector<int>(idx.begin() + static_cast<std::ptrdiff_t>(br) * width,
                            idx.begin() + static_cast<std::ptrdiff_t>(br + 1) * width);
  };

  int features = 0;
  for (int phase = plan.split_phase; phase <= kLastPhase; ++phase) {
    const int count = spec.blocks_per_phase[phase - kFirstBottleneckPhase];
    const auto first = names::block(phase, 1);
    const int mid_o = store_out_channels(store, first + ".conv1.weight");
    const int out_o = store_out_channels(store, first + ".conv3.weight");
    const int mid_b = compute_branch_width(mid_o, nb, plan.budget_offset);
    const int out_b = kExpansion * mid_b;
    if (out_o != kExpansion * mid_o) {
      throw ShapeError("tensor '" + first + ".conv3.weight' breaks the x4 bottleneck expansion");
    }

    // Layer keys: phase * 1000 + block * 10 + role; role 0 is the phase's
    // residual stream, 1 and 2 are the two inner widths of a block.
    const auto stream_key = static_cast<std::uint64_t>(phase) * 1000;
    const auto stream_idx = split_channel_indices(out_o, out_b, nb, seed, stream_key);

    for (int i = 1; i <= count; ++i) {
      const auto src = names::block(phase, i);
      const auto block_key = stream_key + static_cast<std::uint64_t>(i) * 10;
      const int block_mid_o = store_out_channels(store, src + ".conv1.weight");
      if (block_mid_o != mid_o) throw ShapeError("tensor '" + src + ".conv1.weight' width differs within phase");
      const auto mid1_idx = split_channel_indices(mid_o, mid_b, nb, seed, block_key + 1);
      const auto mid2_idx = split_channel_indices(mid_o, mid_b, nb, seed, block_key + 2);

      for (int br = 0; br < nb; ++br) {
        const auto dst = names::block(phase, i, br);
        const auto in_idx = stream_in[static_cast<std::size_t>(br)];
        const auto m1 = slice_of(mid1_idx, mid_b, br);
        const auto m2 = slice_of(mid2_idx, mid_b, br);
        const auto so = slice_of(stream_idx, out_b, br);
        add_sliced_conv(store, out, src + ".conv1", dst + ".conv1", m1, in_idx);
        add_sliced_bn(store, out, src + ".bn1", dst + ".bn1", m1);
        add_sliced_conv(store, out, src + ".conv2", dst + ".conv2", m2, m1);
        add_sliced_bn(store, out, src + ".bn2", dst + ".bn2", m2);
        add_sliced_conv(store, out, src + ".conv3", dst + ".conv3", so, m2);
        add_sliced_bn(store, out, src + ".bn3", dst + ".bn3", so);
        if (i == 1) {
          add_sliced_conv(store, out, src + ".proj", dst + ".proj", so, in_idx);
          add_sliced_bn(store, out, src + ".proj_bn", dst + ".proj_bn", so);
        }
        stream_in[static_cast<std::size_t>(br)] = so;
      }
    }
    features = out_b;
  }

  for (int br = 0; br < nb; ++br) {
    add_fresh_head(out, names::head(br), features, spec.num_classes, seed);
  }
  copy_input_constants(store, out);
  return out;
}

}  // namespace rrr
