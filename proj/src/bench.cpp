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
#include "rrr/bench.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <memory>

#include "rrr/csv.hpp"
#include "rrr/engine.hpp"
#include "rrr/errors.hpp"
#include "rrr/rng.hpp"

namespace rrr {

SampleSummary summarize(const std::vector<double>& samples) {
  if (samples.size() < 2) throw ValidationError("a confidence interval needs at least two samples");
  SampleSummary s;
  s.n = static_cast<int>(samples.size());
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / s.n;
  double sq = 0.0;
  for (double v : samples) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / (s.n - 1));
  const boost::math::students_t dist(s.n - 1);
  s.ci95 = boost::math::quantile(boost::math::complement(dist, 0.025)) * s.stddev / std::sqrt(double(s.n));
  return s;
}

double timer_resolution_s() {
  using clock = std::chrono::steady_clock;
  auto best = clock::duration::max();
  for (int i = 0; i < 200; ++i) {
    const auto t0 = clock::now();
    auto t1 = clock::now();
    while (t1 == t0) t1 = clock::now();
    best = std::min(best, t1 - t0);
  }
  return std::chrono::duration<double>(best).count();
}

std::vector<LatencyRow> bench_latency(const ArchSpec& spec, const TensorStore& store,
                                      const std::vector<PruneSpec>& sweep, const BenchOptions& options) {
  if (options.repeats < kMinRepeats) {
    throw ValidationError("repeats must be at least " + std::to_string(kMinRepeats));
  }
  if (options.warmup < kMinWarmup) throw ValidationError("warmup must be at least " + std::to_string(kMinWarmup));
  const double resolution = timer_resolution_s();

  Image image({kImageChannels, spec.input_side, spec.input_side});
  Rng rng(options.image_seed, 0);
  for (auto& v : image.data) v = static_cast<float>(rng.uniform());

  // Unpruned variants share the input store; pruned ones own a copy.
  struct Variant {
    PruneResult pruned;
    std::unique_ptr<Network> net;
    std::vector<double> times;
  };
  std::vector<Variant> variants(sweep.size());
  for (std::size_t v = 0; v < sweep.size(); ++v) {
    auto& var = variants[v];
    if (sweep[v].sparsity == 0.0) {
      if (spec.branch_plan) throw ValidationError("pruning expects an unbranched spec");
      var.pruned.spec = spec;
      var.net = std::make_unique<Network>(spec, store);
    } else {
      var.pruned = apply_prune(spec, store, sweep[v]);
      var.net = std::make_unique<Network>(var.pruned.spec, var.pruned.store);
    }
    var.times.reserve(static_cast<std::size_t>(options.repeats));
    for (int i = 0; i < options.warmup; ++i) var.net->forward(image);
  }

  // Round-robin over variants so slow drift in machine load hits every
  // variant alike.
  for (int i = 0; i < options.repeats; ++i) {
    for (auto& var : variants) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto out = var.net->forward(image);
      const auto t1 = std::chrono::steady_clock::now();
      if (out.probs.empty()) throw NumericError("empty prediction");
      var.times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
  }

  std::vector<LatencyRow> rows;
  for (std::size_t v = 0; v < sweep.size(); ++v) {
    const auto& var = variants[v];
    const auto s = summarize(var.times);
    if (resolution > 0.01 * s.mean) {
      throw TimingError("timer resolution " + std::to_string(resolution) + " s is coarser than 1% of " +
                        std::to_string(s.mean) + " s");
    }
    rows.push_back({sweep[v].granularity, sweep[v].sparsity, var.pruned.realized_sparsity, var.pruned.spec.name(),
                    s.mean, s.ci95, s.n});
  }
  return rows;
}

std::string latency_csv(const std::vector<LatencyRow>& rows) {
  CsvWriter csv({"granularity", "sparsity", "mean_s", "ci95_s", "n"});
  for (const auto& r : rows) csv.row(to_string(r.granularity), r.sparsity, r.mean_s, r.ci95_s, r.n);
  return csv.str();
}

}  // namespace rrr
