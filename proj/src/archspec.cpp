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
#include "rrr/archspec.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "rrr/errors.hpp"

namespace rrr {
namespace {

std::int64_t isqrt(std::int64_t n) {
  std::int64_t r = 0;
  std::int64_t bit = std::int64_t{1} << 62;
  while (bit > n) bit >>= 2;
  while (bit != 0) {
    if (n >= r + bit) {
      n -= r + bit;
      r = (r >> 1) + bit;
    } else {
      r >>= 1;
    }
    bit >>= 2;
  }
  return r;
}

int conv_out_side(int side, int kernel, int stride, int pad) {
  return (side + 2 * pad - kernel) / stride + 1;
}

int parse_int(std::string_view text, const char* what) {
  int value = 0;
  auto first = text.data();
  auto last = text.data() + text.size();
  while (first != last && *first == ' ') ++first;
  while (last != first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw ValidationError(std::string("cannot parse ") + what + " from '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

int compute_branch_width(int template_width, int num_branches, int budget_offset) {
  if (template_width < 1 || num_branches < 1 || budget_offset < 0) {
    throw ValidationError("branch width needs C_o >= 1, b >= 1, a >= 0");
  }
  // floor(C_o / sqrt(b)) == floor(sqrt(floor(C_o^2 / b))) with no rounding error.
  const std::int64_t co = template_width;
  const auto width = static_cast<int>(isqrt((co * co) / num_branches)) - budget_offset;
  if (width < 1) {
    throw ValidationError("branch width " + std::to_string(width) + " < 1 for C_o=" +
                          std::to_string(template_width) + " b=" + std::to_string(num_branches) +
                          " a=" + std::to_string(budget_offset));
  }
  return width;
}

int BranchPlan::branch_width(int template_mid_width) const {
  return compute_branch_width(template_mid_width, num_branches, budget_offset);
}

int ArchSpec::total_blocks() const {
  int total = 1;
  for (int x : blocks_per_phase) total += x;
  return total;
}

bool ArchSpec::is_branched_phase(int phase) const {
  return branch_plan.has_value() && phase >= branch_plan->split_phase;
}

int ArchSpec::mid_width(int phase) const {
  const int template_width = kTemplateMidWidths.at(phase - kFirstBottleneckPhase);
  return is_branched_phase(phase) ? branch_plan->branch_width(template_width) : template_width;
}

std::string ArchSpec::name() const {
  std::string out = "ResNet";
  for (int x : blocks_per_phase) out += "_" + std::to_string(x);
  if (branch_plan) out += "-" + std::to_string(branch_plan->num_branches) + "_branch";
  return out;
}

ArchSpec ArchSpec::unbranched() const {
  ArchSpec copy = *this;
  copy.branch_plan.reset();
  return copy;
}

void ArchSpec::validate() const {
  for (int i = 0; i < kNumPhases; ++i) {
    const int x = blocks_per_phase[i];
    if (x < 1 || x > kTemplateBlocks[i]) {
      throw ValidationError("x" + std::to_string(i + 1) + " = " + std::to_string(x) +
                            " outside [1, " + std::to_string(kTemplateBlocks[i]) + "]");
    }
  }
  if (num_classes < 1) throw ValidationError("num_classes must be positive");
  if (input_side < kMinInputSide) {
    throw ValidationError("input_side " + std::to_string(input_side) + " below minimum " +
                          std::to_string(kMinInputSide));
  }
  if (branch_plan) {
    const auto& plan = *branch_plan;
    if (plan.num_branches < 1) throw ValidationError("num_branches must be positive");
    if (plan.budget_offset < 0) throw ValidationError("budget_offset must be non-negative");
    if (plan.split_phase < 4 || plan.split_phase > kLastPhase) {
      throw ValidationError("split_phase must be 4 or 5");
    }
    for (int phase = plan.split_phase; phase <= kLastPhase; ++phase) {
      (void)mid_width(phase);  // throws on width < 1
    }
  }
}

ArchSpec make_arch(int x1, int x2, int x3, int x4, int num_classes,
                   std::optional<BranchPlan> plan, int input_side) {
  ArchSpec spec;
  spec.blocks_per_phase = {x1, x2, x3, x4};
  spec.num_classes = num_classes;
  spec.input_side = input_side;
  spec.branch_plan = plan;
  spec.validate();
  return spec;
}

ArchSpec template_arch(int num_classes, int input_side) {
  return make_arch(3, 8, 36, 3, num_classes, std::nullopt, input_side);
}

ArchSpec minimal_arch(int num_classes, int input_side) {
  return make_arch(1, 1, 1, 1, num_classes, std::nullopt, input_side);
}

std::string BlockDescriptor::name() const {
  if (phase_index == 1) return "conv1";
  return "conv" + std::to_string(phase_index) + "_" + std::to_string(block_index_in_phase);
}

std::vector<BlockDescriptor> enumerate_blocks(const ArchSpec& spec) {
  spec.validate();
  std::vector<BlockDescriptor> out;
  out.reserve(static_cast<std::size_t>(spec.total_blocks() * spec.num_branches()));

  BlockDescriptor stem;
  stem.phase_index = 1;
  stem.is_downsampling = true;
  stem.in_channels = kImageChannels;
  stem.mid_channels = kStemChannels;
  stem.out_channels = kStemChannels;
  stem.stride = 2;
  stem.input_spatial = spec.input_side;
  stem.output_spatial = conv_out_side(conv_out_side(spec.input_side, 7, 2, 3), 3, 2, 1);
  out.push_back(stem);

  int channels = kStemChannels;
  int side = stem.output_spatial;
  for (int phase = kFirstBottleneckPhase; phase <= kLastPhase; ++phase) {
    const int count = spec.blocks_per_phase[phase - kFirstBottleneckPhase];
    const int mid = spec.mid_width(phase);
    const int branches = spec.is_branched_phase(phase) ? spec.num_branches() : 1;
    for (int i = 1; i <= count; ++i) {
      BlockDescriptor d;
      d.phase_index = phase;
      d.block_index_in_phase = i;
      d.stride = (i == 1 && phase >= 3) ? 2 : 1;
      d.is_downsampling = (i == 1);
      d.in_channels = channels;
      d.mid_channels = mid;
      d.out_channels = kExpansion * mid;
      d.input_spatial = side;
      d.output_spatial = conv_out_side(side, 3, d.stride, 1);
      for (int b = 0; b < branches; ++b) {
        d.branch = spec.is_branched_phase(phase) ? b : -1;
        out.push_back(d);
      }
      channels = d.out_channels;
      side = d.output_spatial;
    }
  }
  return out;
}

std::array<int, 5> spatial_chain(const ArchSpec& spec) {
  std::array<int, 5> chain{};
  for (const auto& d : enumerate_blocks(spec)) {
    chain[static_cast<std::size_t>(d.phase_index - 1)] = d.output_spatial;
  }
  return chain;
}

std::int64_t search_space_size() {
  std::int64_t n = 1;
  for (int x : kTemplateBlocks) n *= x;
  return n;
}

int max_block_additions() {
  int n = 0;
  for (int x : kTemplateBlocks) n += x - 1;
  return n;
}

std::string to_text(const ArchSpec& spec) {
  std::ostringstream os;
  os << "name=" << spec.name() << "\n";
  os << "blocks=" << spec.blocks_per_phase[0] << "," << spec.blocks_per_phase[1] << ","
     << spec.blocks_per_phase[2] << "," << spec.blocks_per_phase[3] << "\n";
  os << "num_classes=" << spec.num_classes << "\n";
  os << "input_side=" << spec.input_side << "\n";
  if (spec.branch_plan) {
    os << "num_branches=" << spec.branch_plan->num_branches << "\n";
    os << "budget_offset=" << spec.branch_plan->budget_offset << "\n";
    os << "split_phase=" << spec.branch_plan->split_phase << "\n";
  }
  return os.str();
}

ArchSpec from_text(const std::string& text) {
  std::map<std::string, std::string> fields;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("arch line without '=': " + line);
    auto [it, inserted] = fields.emplace(line.substr(0, eq), line.substr(eq + 1));
    if (!inserted) throw ValidationError("duplicate arch field: " + it->first);
  }
  auto require = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw ValidationError(std::string("arch text missing field ") + key);
    return it->second;
  };

  ArchSpec spec;
  spec.blocks_per_phase = parse_block_counts(require("blocks"));
  spec.num_classes = parse_int(require("num_classes"), "num_classes");
  spec.input_side = parse_int(require("input_side"), "input_side");
  if (fields.count("num_branches")) {
    BranchPlan plan;
    plan.num_branches = parse_int(fields["num_branches"], "num_branches");
    plan.budget_offset = fields.count("budget_offset") ? parse_int(fields["budget_offset"], "budget_offset") : 0;
    plan.split_phase = fields.count("split_phase") ? parse_int(fields["split_phase"], "split_phase") : 4;
    spec.branch_plan = plan;
  }
  spec.validate();
  if (fields.count("name") && fields["name"] != spec.name()) {
    throw ValidationError("arch name '" + fields["name"] + "' does not match fields (" + spec.name() + ")");
  }
  return spec;
}

void save_arch(const ArchSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << to_text(spec);
}

ArchSpec load_arch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::array<int, kNumPhases> parse_block_counts(const std::string& csv) {
  std::array<int, kNumPhases> counts{};
  std::size_t start = 0;
  for (int i = 0; i < kNumPhases; ++i) {
    const auto comma = csv.find(',', start);
    const bool last = (i == kNumPhases - 1);
    if (last != (comma == std::string::npos)) {
      throw ValidationError("expected four comma-separated block counts, got '" + csv + "'");
    }
    counts[i] = parse_int(std::string_view(csv).substr(start, last ? std::string::npos : comma - start),
                          "block count");
    start = comma + 1;
  }
  return counts;
}

}  // namespace rrr
