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
#include "rrr/analyzer.hpp"

#include "rrr/csv.hpp"
#include "rrr/errors.hpp"

namespace rrr {
namespace {

std::int64_t conv_params(std::int64_t kernel, std::int64_t cin, std::int64_t cout) {
  return kernel * kernel * cin * cout;
}

std::int64_t area(int side) { return static_cast<std::int64_t>(side) * side; }

std::string phase_label(int phase) {
  return phase == 1 ? "conv1" : "conv" + std::to_string(phase) + "_x";
}

}  // namespace

BlockCost block_cost(const BlockDescriptor& b) {
  BlockCost c;
  if (b.phase_index == 1) {
    const auto w = conv_params(7, b.in_channels, b.out_channels);
    const int conv_side = (b.input_spatial + 2 * 3 - 7) / 2 + 1;
    c.params = w + 2 * b.out_channels;
    c.weight_params = w;
    c.flops = w * area(conv_side);
    return c;
  }
  const std::int64_t in = b.in_channels, mid = b.mid_channels, out = b.out_channels;
  const auto reduce = conv_params(1, in, mid);
  const auto spatial = conv_params(3, mid, mid);
  const auto expand = conv_params(1, mid, out);
  const auto proj = b.has_projection() ? conv_params(1, in, out) : 0;
  const auto bn = 2 * (mid + mid + out + (b.has_projection() ? out : 0));
  c.weight_params = reduce + spatial + expand + proj;
  c.params = c.weight_params + bn;
  c.flops = reduce * area(b.input_spatial) + (spatial + expand + proj) * area(b.output_spatial);
  return c;
}

BlockCost head_cost(int features, int num_classes) {
  const std::int64_t w = static_cast<std::int64_t>(features) * num_classes;
  return {w + num_classes, w, w};
}

CostReport analyze(const ArchSpec& spec) {
  CostReport report;
  const auto blocks = enumerate_blocks(spec);
  int last_phase = 0;
  int features = 0;
  for (const auto& b : blocks) {
    if (b.phase_index != last_phase) {
      report.per_phase.push_back({phase_label(b.phase_index), 0, 0, 0, 0, 0});
      last_phase = b.phase_index;
    }
    auto& row = report.per_phase.back();
    const auto cost = block_cost(b);
    row.params += cost.params;
    row.flops += cost.flops;
    row.weight_params += cost.weight_params;
    if (b.block_index_in_phase == 1) {
      row.first_block_params += cost.params;
      row.first_block_flops += cost.flops;
    }
    features = b.out_channels;
  }
  const auto head = head_cost(features, spec.num_classes);
  const std::int64_t heads = spec.num_branches();
  report.per_phase.push_back(
      {"head", heads * head.params, heads * head.flops, head.params, head.flops, heads * head.weight_params});
  for (const auto& row : report.per_phase) {
    report.total_params += row.params;
    report.total_flops += row.flops;
  }
  return report;
}

CostReport count_params(const ArchSpec& spec) { return analyze(spec); }
CostReport count_flops(const ArchSpec& spec) { return analyze(spec); }

std::int64_t total_params(const ArchSpec& spec) { return analyze(spec).total_params; }
std::int64_t total_flops(const ArchSpec& spec) { return analyze(spec).total_flops; }

double sparsity_of(std::int64_t variant_params, std::int64_t baseline_params) {
  if (baseline_params <= 0) throw ValidationError("baseline parameter count must be positive");
  if (variant_params < 0) throw ValidationError("variant parameter count must be non-negative");
  if (baseline_params < variant_params) {
    throw ValidationError("baseline (" + std::to_string(baseline_params) + ") smaller than variant (" +
                          std::to_string(variant_params) + ")");
  }
  return 1.0 - static_cast<double>(variant_params) / static_cast<double>(baseline_params);
}

double sparsity_of(const ArchSpec& variant, const ArchSpec& baseline) {
  return sparsity_of(total_params(variant), total_params(baseline));
}

std::string cost_report_csv(const ArchSpec& spec, const CostReport& report) {
  CsvWriter csv({"name", "phase", "params", "flops", "first_block_params", "first_block_flops",
                 "total_params", "total_flops"});
  const auto name = spec.name();
  for (const auto& row : report.per_phase) {
    csv.row(name, row.phase, row.params, row.flops, row.first_block_params, row.first_block_flops,
            report.total_params, report.total_flops);
  }
  csv.row(name, "total", report.total_params, report.total_flops, "", "", report.total_params,
          report.total_flops);
  return csv.str();
}

}  // namespace rrr
