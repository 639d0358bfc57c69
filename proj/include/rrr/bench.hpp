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
#include "rrr/prune.hpp"
#include "rrr/tensor_store.hpp"

namespace rrr {

struct SampleSummary {
  double mean = 0.0;
  double ci95 = 0.0;  // half-width, Student t with n-1 degrees of freedom
  double stddev = 0.0;
  int n = 0;
};

/// Throws ValidationError for fewer than two samples.
SampleSummary summarize(const std::vector<double>& samples);

struct LatencyRow {
  Granularity granularity = Granularity::kBlock;
  double sparsity = 0.0;           // requested
  double realized_sparsity = 0.0;
  std::string variant;             // spec name after pruning
  double mean_s = 0.0;
  double ci95_s = 0.0;
  int n = 0;
};

struct BenchOptions {
  int repeats = 200;
  int warmup = 5;
  std::uint64_t image_seed = 0;
};

inline constexpr int kMinRepeats = 30;
inline constexpr int kMinWarmup = 5;

/// Smallest observable tick of the monotonic clock, in seconds.
double timer_resolution_s();

/// Times single-image forward passes of each pruned variant on the
/// calling thread. All variants are built up front and timed round-robin;
/// variants at sparsity 0 share `store`. Throws TimingError when the timer
/// resolution exceeds 1% of a measured mean.
std::vector<LatencyRow> bench_latency(const ArchSpec& spec, const TensorStore& store,
                                      const std::vector<PruneSpec>& sweep, const BenchOptions& options);

/// CSV with columns granularity, sparsity, mean_s, ci95_s, n.
std::string latency_csv(const std::vector<LatencyRow>& rows);

}  // namespace rrr
