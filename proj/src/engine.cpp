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
#include "rrr/engine.hpp"

#include <cmath>

#include "rrr/errors.hpp"

namespace rrr {
namespace {

ConvBnLayout conv_bn_layout(const std::string& prefix, const char* conv, const char* bn, int k, int stride,
                            int pad) {
  return {prefix + "." + conv + ".weight", prefix + "." + bn, k, stride, pad};
}

BlockLayout block_layout(int phase, int index, int branch) {
  BlockLayout b;
  b.prefix = names::block(phase, index, branch);
  b.phase = phase;
  b.index = index;
  b.branch = branch;
  const int stride = (index == 1 && phase >= 3) ? 2 : 1;
  b.reduce = conv_bn_layout(b.prefix, "conv1", "bn1", 1, 1, 0);
  b.spatial = conv_bn_layout(b.prefix, "conv2", "bn2", 3, stride, 1);
  b.expand = conv_bn_layout(b.prefix, "conv3", "bn3", 1, 1, 0);
  if (index == 1) b.proj = conv_bn_layout(b.prefix, "proj", "proj_bn", 1, stride, 0);
  return b;
}

void check_finite(const FeatureMap& x, const std::string& where) {
  for (float v : x.data) {
    if (!std::isfinite(v)) throw NumericError("non-finite activation after " + where);
  }
}

std::string phase_name(int phase) { return "conv" + std::to_string(phase) + "_x"; }

}  // namespace

NetworkLayout make_layout(const ArchSpec& spec) {
  spec.validate();
  NetworkLayout layout;
  layout.stem = {"conv1.weight", "bn1", 7, 2, 3};
  const int nb = spec.num_branches();
  layout.tails.resize(static_cast<std::size_t>(spec.branch_plan ? nb : 1));
  for (int phase = kFirstBottleneckPhase; phase <= kLastPhase; ++phase) {
    for (int i = 1; i <= spec.blocks_per_phase[phase - kFirstBottleneckPhase]; ++i) {
      if (!spec.is_branched_phase(phase)) {
        layout.stump.push_back(block_layout(phase, i, -1));
        continue;
      }
      for (int br = 0; br < nb; ++br) layout.tails[static_cast<std::size_t>(br)].push_back(block_layout(phase, i, br));
    }
  }
  if (spec.branch_plan) {
    for (int br = 0; br < nb; ++br) layout.heads.push_back(names::head(br));
  } else {
    layout.heads.push_back(names::head());
  }
  return layout;
}

Network::Network(const ArchSpec& spec, const TensorStore& store)
    : spec_(spec), store_(&store), layout_(make_layout(spec)) {
  validate();
  stem_ = bind(layout_.stem);
  for (const auto& b : layout_.stump) stump_.push_back(bind(b));
  for (const auto& tail : layout_.tails) {
    auto& bound = tails_.emplace_back();
    for (const auto& b : tail) bound.push_back(bind(b));
  }
  for (const auto& h : layout_.heads) heads_.push_back({&store.get(h + ".weight"), &store.get(h + ".bias")});
  mean_ = &store.get(names::kInputMean);
  std_ = &store.get(names::kInputStd);
}

void Network::validate() const {
  const auto& store = *store_;
  auto expect_shape = [&](const std::string& name, const Shape& shape) -> const TensorF& {
    if (!store.contains(name)) throw ShapeError("missing tensor '" + name + "'");
    const auto& t = store.get(name);
    if (t.shape != shape) {
      throw ShapeError("tensor '" + name + "' has shape " + shape_str(t.shape) + ", expected " + shape_str(shape));
    }
    return t;
  };
  auto check_conv_bn = [&](const ConvBnLayout& l, int in_channels) -> int {
    if (!store.contains(l.conv)) throw ShapeError("missing tensor '" + l.conv + "'");
    const auto& w = store.get(l.conv);
    if (w.rank() != 4 || w.dim(1) != in_channels || w.dim(2) != l.kernel || w.dim(3) != l.kernel) {
      throw ShapeError("tensor '" + l.conv + "' has shape " + shape_str(w.shape) + ", expected (*," +
                       std::to_string(in_channels) + "," + std::to_string(l.kernel) + "," +
                       std::to_string(l.kernel) + ")");
    }
    const int out = w.dim(0);
    for (const char* f : {".weight", ".bias", ".running_mean", ".running_var"}) expect_shape(l.bn + f, {out});
    return out;
  };
  auto check_block = [&](const BlockLayout& b, int in_channels) -> int {
    const int m1 = check_conv_bn(b.reduce, in_channels);
    const int m2 = check_conv_bn(b.spatial, m1);
    const int out = check_conv_bn(b.expand, m2);
    const int skip = b.proj ? check_conv_bn(*b.proj, in_channels) : in_channels;
    if (skip != out) {
      throw ShapeError("tensor '" + b.expand.conv + "' produces " + std::to_string(out) +
                       " channels but the skip path carries " + std::to_string(skip));
    }
    return out;
  };

  expect_shape(std::string(names::kInputMean), {kImageChannels});
  expect_shape(std::string(names::kInputStd), {kImageChannels});
  int channels = check_conv_bn(layout_.stem, kImageChannels);
  for (const auto& b : layout_.stump) channels = check_block(b, channels);
  for (std::size_t t = 0; t < layout_.tails.size(); ++t) {
    int c = channels;
    for (const auto& b : layout_.tails[t]) c = check_block(b, c);
    expect_shape(layout_.heads[t] + ".weight", {spec_.num_classes, c});
    expect_shape(layout_.heads[t] + ".bias", {spec_.num_classes});
  }
}

Network::BoundConvBn Network::bind(const ConvBnLayout& l) const {
  BoundConvBn b;
  b.weight = &store_->get(l.conv);
  b.gamma = &store_->get(l.bn + ".weight");
  b.beta = &store_->get(l.bn + ".bias");
  b.mean = &store_->get(l.bn + ".running_mean");
  b.var = &store_->get(l.bn + ".running_var");
  b.kernel = l.kernel;
  b.stride = l.stride;
  b.pad = l.pad;
  return b;
}

Network::BoundBlock Network::bind(const BlockLayout& b) const {
  BoundBlock out{bind(b.reduce), bind(b.spatial), bind(b.expand), std::nullopt};
  if (b.proj) out.proj = bind(*b.proj);
  return out;
}

FeatureMap Network::conv_bn(const BoundConvBn& l, const FeatureMap& x, bool relu,
                            kernels::Workspace<float>& ws) const {
  FeatureMap y;
  y.channels = l.weight->dim(0);
  y.height = kernels::conv_out(x.height, l.kernel, l.stride, l.pad);
  y.width = kernels::conv_out(x.width, l.kernel, l.stride, l.pad);
  y.data.resize(static_cast<std::size_t>(y.channels) * y.height * y.width);
  kernels::conv2d(x.data.data(), x.channels, x.height, x.width, l.weight->ptr(), y.channels, l.kernel, l.stride,
                  l.pad, y.data.data(), ws);
  kernels::batch_norm_inference(y.data.data(), y.channels, y.height * y.width, l.gamma->ptr(), l.beta->ptr(),
                                l.mean->ptr(), l.var->ptr(), kBnEps);
  if (relu) kernels::relu(std::span<float>(y.data));
  return y;
}

FeatureMap Network::block(const BoundBlock& b, const FeatureMap& x, kernels::Workspace<float>& ws) const {
  auto h = conv_bn(b.reduce, x, true, ws);
  h = conv_bn(b.spatial, h, true, ws);
  h = conv_bn(b.expand, h, false, ws);
  if (b.proj) {
    const auto skip = conv_bn(*b.proj, x, false, ws);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += skip.data[i];
  } else {
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += x.data[i];
  }
  kernels::relu(std::span<float>(h.data));
  return h;
}

std::vector<float> Network::head(const BoundHead& h, const FeatureMap& x) const {
  std::vector<float> pooled(static_cast<std::size_t>(x.channels));
  kernels::global_avg_pool(x.data.data(), x.channels, x.height * x.width, pooled.data());
  std::vector<float> logits(static_cast<std::size_t>(h.weight->dim(0)));
  kernels::linear(pooled.data(), x.channels, h.weight->ptr(), h.bias->ptr(), h.weight->dim(0), logits.data());
  return logits;
}

FeatureMap Network::normalize_input(const Image& image) const {
  if (image.rank() != 3 || image.dim(0) != kImageChannels || image.dim(1) != spec_.input_side ||
      image.dim(2) != spec_.input_side) {
    throw ShapeError("image has shape " + shape_str(image.shape) + ", expected (3," +
                     std::to_string(spec_.input_side) + "," + std::to_string(spec_.input_side) + ")");
  }
  FeatureMap x{image.dim(0), image.dim(1), image.dim(2), image.data};
  const std::size_t hw = static_cast<std::size_t>(x.height) * x.width;
  for (int c = 0; c < x.channels; ++c) {
    const float m = (*mean_)[static_cast<std::size_t>(c)];
    const float s = (*std_)[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < hw; ++i) x.data[c * hw + i] = (x.data[c * hw + i] - m) / s;
  }
  return x;
}

FeatureMap Network::run_stem(const FeatureMap& x) const {
  kernels::Workspace<float> ws;
  const auto h = conv_bn(stem_, x, true, ws);
  FeatureMap y;
  y.channels = h.channels;
  y.height = kernels::conv_out(h.height, 3, 2, 1);
  y.width = kernels::conv_out(h.width, 3, 2, 1);
  y.data.resize(static_cast<std::size_t>(y.channels) * y.height * y.width);
  kernels::max_pool(h.data.data(), h.channels, h.height, h.width, 3, 2, 1, y.data.data());
  return y;
}

FeatureMap Network::run_block(const BlockLayout& b, const FeatureMap& x) const {
  kernels::Workspace<float> ws;
  return block(bind(b), x, ws);
}

std::vector<float> Network::run_head(int branch, const FeatureMap& x) const {
  return head(heads_.at(static_cast<std::size_t>(branch)), x);
}

std::vector<std::vector<float>> Network::run(const Image& image,
                                             std::vector<std::pair<std::string, Shape>>* trace) const {
  kernels::Workspace<float> ws;
  auto x = run_stem(normalize_input(image));
  check_finite(x, "conv1");
  if (trace) trace->emplace_back("conv1", x.shape());
  auto record = [&](int phase, bool last_in_phase, const FeatureMap& fm) {
    if (trace && last_in_phase) trace->emplace_back(phase_name(phase), fm.shape());
  };
  for (std::size_t i = 0; i < stump_.size(); ++i) {
    x = block(stump_[i], x, ws);
    check_finite(x, layout_.stump[i].prefix);
    const bool last = i + 1 == stump_.size() || layout_.stump[i + 1].phase != layout_.stump[i].phase;
    record(layout_.stump[i].phase, last, x);
  }
  std::vector<std::vector<float>> probs;
  for (std::size_t t = 0; t < tails_.size(); ++t) {
    FeatureMap y = x;
    const auto& tail = layout_.tails[t];
    for (std::size_t i = 0; i < tail.size(); ++i) {
      y = block(tails_[t][i], y, ws);
      check_finite(y, tail[i].prefix);
      const bool last = i + 1 == tail.size() || tail[i + 1].phase != tail[i].phase;
      if (t == 0) record(tail[i].phase, last, y);
    }
    auto logits = head(heads_[t], y);
    kernels::softmax(std::span<float>(logits));
    for (float p : logits) {
      if (!std::isfinite(p)) throw NumericError("non-finite probability in " + layout_.heads[t]);
    }
    probs.push_back(std::move(logits));
  }
  return probs;
}

Prediction Network::forward(const Image& image) const {
  Prediction p;
  p.per_branch_probs = run(image, nullptr);
  // Diverged weights give NaN here; that is a numeric failure, not bad input.
  for (const auto& row : p.per_branch_probs) {
    for (float v : row) {
      if (!std::isfinite(v)) throw NumericError("non-finite network output");
    }
  }
  p.probs = ensemble_average(p.per_branch_probs);
  return p;
}

std::vector<std::pair<std::string, Shape>> Network::trace_shapes(const Image& image) const {
  std::vector<std::pair<std::string, Shape>> trace;
  run(image, &trace);
  return trace;
}

Prediction forward(const ArchSpec& spec, const TensorStore& store, const Image& image) {
  return Network(spec, store).forward(image);
}

std::vector<float> ensemble_average(const std::vector<std::vector<float>>& per_branch) {
  if (per_branch.empty()) throw ValidationError("ensemble_average needs at least one row");
  const std::size_t n = per_branch.front().size();
  std::vector<double> sum(n, 0.0);
  for (std::size_t r = 0; r < per_branch.size(); ++r) {
    const auto& row = per_branch[r];
    if (row.size() != n) throw ValidationError("ensemble rows differ in length");
    double total = 0.0;
    for (float v : row) {
      if (!(v >= 0.0f)) throw ValidationError("row " + std::to_string(r) + " has a negative or NaN entry");
      total += v;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance) {
      throw ValidationError("row " + std::to_string(r) + " sums to " + std::to_string(total));
    }
    for (std::size_t i = 0; i < n; ++i) sum[i] += row[i];
  }
  std::vector<float> mean(n);
  const double count = static_cast<double>(per_branch.size());
  for (std::size_t i = 0; i < n; ++i) mean[i] = static_cast<float>(sum[i] / count);
  return mean;
}

int argmax(const std::vector<float>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace rrr
