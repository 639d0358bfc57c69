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

#include <cmath>
#include <filesystem>
#include <limits>

#include "rrr/errors.hpp"
#include "rrr/surgery.hpp"
#include "rrr/training.hpp"

namespace rrr {
namespace {

ArchSpec tiny(int classes, int side = 32) { return make_arch(1, 1, 1, 1, classes, std::nullopt, side); }

TrainConfig quick(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.ema_window_epochs = 0;
  c.batch_size = 8;
  return c;
}

bool same_params(const TensorStore& a, const TensorStore& b) {
  for (const auto& [n, t] : a.entries()) {
    if (names::is_buffer(n)) continue;
    if (!b.contains(n) || b.get(n) != t) return false;
  }
  return true;
}

// ---------------------------------------------------------------- dataset

TEST(SynthDataset, DeterministicAndBalanced) {
  const auto a = synth_dataset(4, 20, 64, 7);
  const auto b = synth_dataset(4, 20, 64, 7);
  ASSERT_EQ(a.examples.size(), 80u);
  for (std::size_t i = 0; i < a.examples.size(); ++i) {
    EXPECT_EQ(a.examples[i].image, b.examples[i].image);
    EXPECT_EQ(a.examples[i].label, b.examples[i].label);
  }
  std::vector<int> hist(4);
  for (const auto& e : a.examples) {
    ++hist[static_cast<std::size_t>(e.label)];
    EXPECT_EQ(e.image.shape, (Shape{3, 64, 64}));
    for (float v : e.image.data) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
  EXPECT_EQ(hist, (std::vector<int>{20, 20, 20, 20}));
  EXPECT_NE(synth_dataset(4, 20, 64, 8).examples[0].image, a.examples[0].image);
  EXPECT_THROW(synth_dataset(4, 2, 31, 0), ValidationError);
}

TEST(SynthDataset, NearestCentroidBeatsChance) {
  const auto train_set = synth_dataset(4, 20, 64, 1);
  const auto test_set = synth_dataset(4, 20, 64, 2);
  const std::size_t dim = train_set.examples[0].image.size();
  std::vector<std::vector<double>> centroid(4, std::vector<double>(dim));
  for (const auto& e : train_set.examples)
    for (std::size_t i = 0; i < dim; ++i) centroid[static_cast<std::size_t>(e.label)][i] += e.image[i] / 20.0;
  int correct = 0;
  for (const auto& e : test_set.examples) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 4; ++c) {
      double d = 0;
      for (std::size_t i = 0; i < dim; ++i) d += std::pow(e.image[i] - centroid[static_cast<std::size_t>(c)][i], 2);
      if (d < best_d) best_d = d, best = c;
    }
    correct += best == e.label;
  }
  EXPECT_GT(correct / 80.0, 0.25 + 0.15);
}

TEST(SynthDataset, SaveLoadRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "rrr_dataset_rt.rrrw").string();
  const auto d = synth_dataset(3, 2, 32, 4);
  save_dataset(d, path);
  const auto back = load_dataset(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.num_classes, 3);
  ASSERT_EQ(back.examples.size(), d.examples.size());
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    EXPECT_EQ(back.examples[i].image, d.examples[i].image);
    EXPECT_EQ(back.examples[i].label, d.examples[i].label);
  }
}

// -------------------------------------------------------------- optimizer

TEST(Optimizer, ZeroGradientStepIsPureDecay) {
  TrainConfig c;
  c.learning_rate = 0.05f;
  c.weight_decay = 0.3f;
  AdamW opt(c);
  std::map<std::string, TensorF> params{{"w", TensorF({3}, std::vector<float>{1.0f, -2.0f, 0.5f})},
                                        {"bn1.running_mean", TensorF({1}, 4.0f)}};
  const auto before = params;
  opt.step(params, {});
  const float factor = 1.0f - 0.05f * 0.3f;
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(params["w"][i], before.at("w")[i] * factor);
  EXPECT_EQ(params["bn1.running_mean"], before.at("bn1.running_mean"));
}

TEST(Optimizer, FirstStepMovesByLearningRate) {
  // Bias correction makes the first Adam step lr * sign(g) up to eps.
  TrainConfig c;
  c.weight_decay = 0.0f;
  AdamW opt(c);
  std::map<std::string, TensorF> params{{"w", TensorF({2}, std::vector<float>{0.0f, 0.0f})}};
  opt.step(params, {{"w", TensorF({2}, std::vector<float>{3.0f, -0.2f})}});
  EXPECT_NEAR(params["w"][0], -1e-3f, 1e-9f);
  EXPECT_NEAR(params["w"][1], 1e-3f, 1e-9f);
}

TEST(Optimizer, EmaOfConstantParametersIsExact) {
  ParamEma ema(0.97);
  std::map<std::string, TensorF> params{{"w", TensorF({4}, std::vector<float>{0.1f, -3.3f, 7e-8f, 12.5f})}};
  for (int i = 0; i < 50; ++i) ema.update(params);
  EXPECT_EQ(ema.value().at("w"), params.at("w"));
  // And it actually averages.
  ParamEma avg(0.5);
  avg.update({{"w", TensorF({1}, 0.0f)}});
  avg.update({{"w", TensorF({1}, 1.0f)}});
  EXPECT_FLOAT_EQ(avg.value().at("w")[0], 0.5f);
}

// ------------------------------------------------------------------ train

class Training : public ::testing::Test {
 protected:
  Training()
      : spec(tiny(3)), store(init_store(spec, 3, WidthConfig::scaled_down(16))), data(synth_dataset(3, 4, 32, 5)) {}
  ArchSpec spec;
  TensorStore store;
  Dataset data;
};

TEST_F(Training, ZeroEpochsIsIdentity) {
  const auto r = train(spec, store, data, quick(0));
  EXPECT_EQ(r.store, store);
  EXPECT_TRUE(r.curve.empty());
}

TEST_F(Training, ZeroStepLeavesParameters) {
  auto c = quick(3);
  c.learning_rate = 0.0f;
  c.weight_decay = 0.0f;
  const auto r = train(spec, store, data, c);
  EXPECT_TRUE(same_params(r.store, store));
  EXPECT_EQ(r.curve.size(), 3u);
}

TEST_F(Training, DeterministicGivenSeed) {
  auto c = quick(2);
  c.ema_window_epochs = 1;
  const auto a = train(spec, store, data, c);
  const auto b = train(spec, store, data, c);
  EXPECT_EQ(a.store, b.store);
  c.seed = 1;
  const auto d = train(spec, store, data, c);
  EXPECT_NE(a.store, d.store);
}

TEST_F(Training, EmaWithFrozenParametersReturnsThem) {
  auto c = quick(4);
  c.learning_rate = 0.0f;
  c.ema_window_epochs = 2;
  const auto r = train(spec, store, data, c);
  EXPECT_TRUE(same_params(r.store, store));
}

TEST_F(Training, EmaDiffersFromLastIterate) {
  auto with = quick(4);
  with.ema_window_epochs = 2;
  auto without = quick(4);
  const auto a = train(spec, store, data, with);
  const auto b = train(spec, store, data, without);
  // Same trajectory, so BN running stats agree; the averaged weights do not.
  EXPECT_EQ(a.store.get("conv2_1.bn1.running_mean"), b.store.get("conv2_1.bn1.running_mean"));
  EXPECT_NE(a.store.get("fc.weight"), b.store.get("fc.weight"));
}

TEST_F(Training, RejectsBadConfigAndData) {
  auto c = quick(2);
  c.ema_window_epochs = 3;
  EXPECT_THROW(train(spec, store, data, c), ValidationError);
  c = quick(1);
  c.batch_size = 0;
  EXPECT_THROW(train(spec, store, data, c), ValidationError);
  EXPECT_THROW(train(tiny(4), store, data, quick(1)), ValidationError);
  EXPECT_THROW(train(tiny(3, 64), store, data, quick(1)), ValidationError);
}

TEST_F(Training, DivergenceNamesTheEpoch) {
  auto bad = store;
  bad.get_mut("fc.bias")[1] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(spec, bad, data, quick(3));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST_F(Training, AugmentHookSeesEveryExampleEachEpoch) {
  auto c = quick(2);
  int calls = 0;
  c.augment = [&](const Image& img, Rng& rng) {
    ++calls;
    Image out = img;
    const float shift = static_cast<float>(rng.uniform(-0.05, 0.05));
    for (auto& v : out.data) v = std::clamp(v + shift, 0.0f, 1.0f);
    return out;
  };
  const auto a = train(spec, store, data, c);
  EXPECT_EQ(calls, 2 * static_cast<int>(data.examples.size()));
  const auto b = train(spec, store, data, c);
  EXPECT_EQ(a.store, b.store);
}

TEST(TrainingHeads, SeparableTwoClassReachesFullAccuracy) {
  const auto spec = tiny(2);
  const auto store = init_store(spec, 1, WidthConfig::scaled_down(4));
  const auto data = synth_dataset(2, 20, 32, 3);

  // Oracle: plain logistic regression on the same frozen features, in
  // double, shows the task is separable for a linear head.
  const Network net(spec, store);
  const auto layout = make_layout(spec);
  std::vector<std::vector<double>> feats;
  for (const auto& e : data.examples) {
    auto x = net.run_stem(net.normalize_input(e.image));
    for (const auto& b : layout.stump) x = net.run_block(b, x);
    std::vector<double> f(static_cast<std::size_t>(x.channels));
    const std::size_t hw = static_cast<std::size_t>(x.height) * x.width;
    for (int ch = 0; ch < x.channels; ++ch)
      for (std::size_t i = 0; i < hw; ++i) f[static_cast<std::size_t>(ch)] += x.data[ch * hw + i] / hw;
    feats.push_back(std::move(f));
  }
  const std::size_t dim = feats[0].size();
  std::vector<double> w(dim + 1);
  for (int it = 0; it < 20000; ++it) {
    std::vector<double> g(dim + 1);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      double z = w[dim];
      for (std::size_t k = 0; k < dim; ++k) z += w[k] * feats[i][k];
      const double err = 1.0 / (1.0 + std::exp(-z)) - data.examples[i].label;
      for (std::size_t k = 0; k < dim; ++k) g[k] += err * feats[i][k];
      g[dim] += err;
    }
    for (std::size_t k = 0; k <= dim; ++k) w[k] -= 0.5 * g[k] / feats.size();
  }
  int oracle_correct = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    double z = w[dim];
    for (std::size_t k = 0; k < dim; ++k) z += w[k] * feats[i][k];
    oracle_correct += (z > 0) == (data.examples[i].label == 1);
  }
  ASSERT_EQ(oracle_correct, static_cast<int>(feats.size())) << "features are not linearly separable";

  TrainConfig c;
  c.epochs = 50;
  c.ema_window_epochs = 0;
  c.scope = TrainScope::kHeads;
  const auto r = train(spec, store, data, c);
  double best = 0;
  for (const auto& e : r.curve) best = std::max(best, e.train_acc);
  EXPECT_GE(best, 0.99);
  // Head-only: everything else is untouched, buffers included.
  for (const auto& [n, t] : store.entries())
    if (n.rfind("fc.", 0) != 0) EXPECT_EQ(r.store.get(n), t) << n;
  EXPECT_GE(evaluate(spec, r.store, data).accuracy, 0.99);
}

// --------------------------------------------------------------- branches

TensorStore rename(const TensorStore& s, const std::vector<std::pair<std::string, std::string>>& map) {
  TensorStore out;
  for (const auto& [n, t] : s.entries()) {
    std::string name = n;
    for (const auto& [from, to] : map)
      if (name.rfind(from, 0) == 0) name = to + name.substr(from.size());
    out.add(name, t);
  }
  return out;
}

TEST(TrainingBranches, StumpIsBitFrozen) {
  const auto base = make_arch(1, 1, 1, 1, 3, std::nullopt, 32);
  auto spec = base;
  spec.branch_plan = BranchPlan{4, solve_budget_offset(base, 4), 4};
  const auto store = split_kernels(init_store(base, 2, WidthConfig::scaled_down(8)), spec, 9);
  const auto data = synth_dataset(3, 4, 32, 1);
  auto c = quick(2);
  c.test = &data;
  const auto r = train_branches(spec, store, data, c);
  int changed = 0;
  for (const auto& [n, t] : store.entries()) {
    const bool stump = n.rfind("conv1.", 0) == 0 || n.rfind("bn1.", 0) == 0 || n.rfind("conv2_", 0) == 0 ||
                       n.rfind("conv3_", 0) == 0 || n.rfind("input.", 0) == 0;
    if (stump) {
      EXPECT_EQ(r.store.get(n), t) << n;
    } else if (!names::is_buffer(n)) {
      changed += r.store.get(n) != t;
    }
  }
  EXPECT_GT(changed, 0);
  EXPECT_EQ(r.curve.size(), 2u);
  EXPECT_GE(r.curve.back().test_acc, 0.0);
  const auto ev = evaluate(spec, r.store, data);
  EXPECT_EQ(ev.per_branch.size(), 4u);
  EXPECT_THROW(train_branches(base, init_store(base, 2, WidthConfig::scaled_down(8)), data, c), ValidationError);
}

TEST(TrainingBranches, SingleBranchMatchesUnbranchedTail) {
  const auto base = make_arch(1, 1, 1, 1, 3, std::nullopt, 32);
  auto spec = base;
  spec.branch_plan = BranchPlan{1, 0, 4};
  const auto plain = init_store(base, 2, WidthConfig::scaled_down(8));
  const auto branched = rename(plain, {{"conv4_1.", "conv4_1.branch0."}, {"conv5_1.", "conv5_1.branch0."}, {"fc.", "fc.branch0."}});
  const auto data = synth_dataset(3, 4, 32, 1);
  auto c = quick(2);
  c.ema_window_epochs = 1;
  const auto a = train_branches(spec, branched, data, c);
  c.scope = TrainScope::kTails;
  const auto b = train(base, plain, data, c);
  const auto back = rename(a.store, {{"conv4_1.branch0.", "conv4_1."}, {"conv5_1.branch0.", "conv5_1."}, {"fc.branch0.", "fc."}});
  EXPECT_EQ(back, b.store);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
}

// -------------------------------------------------------------- selection

class Selection : public ::testing::Test {
 protected:
  Selection()
      : full(init_store(make_arch(3, 8, 36, 3, 10, std::nullopt, 32), 1, WidthConfig::scaled_down(16))),
        data(synth_dataset(3, 2, 32, 0)) {}

  SelectionResult run(std::vector<double> accuracies, double epsilon, std::vector<std::string>* visited = nullptr) {
    std::size_t call = 0;
    return forward_block_selection(full, data, data, quick(1), epsilon, [&](const ArchSpec& s, TensorStore& st) {
      if (visited) visited->push_back(s.name());
      EXPECT_NO_THROW(Network(s, st)) << s.name();
      const double a = call < accuracies.size() ? accuracies[call] : accuracies.back();
      ++call;
      return a;
    });
  }

  TensorStore full;
  Dataset data;
};

TEST_F(Selection, ScriptedStopCase) {
  const auto r = run({0.50, 0.60, 0.601}, 0.05);
  EXPECT_EQ(r.spec.name(), "ResNet_2_1_1_1");
  ASSERT_EQ(r.state.history.size(), 3u);
  EXPECT_DOUBLE_EQ(r.state.best_reference_accuracy, 0.50);
  EXPECT_DOUBLE_EQ(r.state.previous_accuracy, 0.60);
  EXPECT_NEAR(r.state.history[1].relative_gain, 0.2, 1e-12);
  EXPECT_NEAR(r.state.history[2].relative_gain, 0.002, 1e-12);
  EXPECT_TRUE(r.state.history[1].accepted);
  EXPECT_FALSE(r.state.history[2].accepted);
  EXPECT_EQ(r.state.history[2].spec.name(), "ResNet_3_1_1_1");
  // Rejected block tensors are gone; the rest is a valid network.
  EXPECT_TRUE(names_with_prefix(r.store, "conv2_3").empty());
  EXPECT_FALSE(names_with_prefix(r.store, "conv2_2").empty());
  EXPECT_NO_THROW(Network(r.spec, r.store));
  EXPECT_EQ(selection_csv(r.state),
            "step,spec_name,accuracy,relative_gain,accepted\r\n"
            "0,ResNet_1_1_1_1,0.5,,true\r\n"
            "1,ResNet_2_1_1_1,0.6,0.19999999999999996,true\r\n"
            "2,ResNet_3_1_1_1,0.601,0.0020000000000000018,false\r\n");
}

TEST_F(Selection, InfiniteEpsilonStopsAtFirstCheck) {
  const auto r = run({0.5, 0.9}, std::numeric_limits<double>::infinity());
  EXPECT_EQ(r.spec.name(), "ResNet_1_1_1_1");
  EXPECT_EQ(r.state.history.size(), 2u);
}

TEST_F(Selection, NegativeInfinityVisitsTheWholeTemplate) {
  std::vector<std::string> visited;
  const auto r = run({0.0}, -std::numeric_limits<double>::infinity(), &visited);
  EXPECT_EQ(r.spec.name(), "ResNet_3_8_36_3");
  EXPECT_EQ(r.state.history.size(), 47u);  // initial point plus 46 additions
  EXPECT_EQ(visited.size(), 47u);
  // Phase-fill order, independent of accuracies.
  const std::vector<std::string> head{"ResNet_1_1_1_1", "ResNet_2_1_1_1", "ResNet_3_1_1_1", "ResNet_3_2_1_1",
                                      "ResNet_3_3_1_1"};
  EXPECT_EQ(std::vector<std::string>(visited.begin(), visited.begin() + 5), head);
  EXPECT_EQ(visited[10], "ResNet_3_8_2_1");
  EXPECT_EQ(visited[45], "ResNet_3_8_36_2");
  const auto kept = keep_blocks(r.store, r.spec);
  EXPECT_EQ(kept.size(), r.store.size());
}

TEST_F(Selection, ZeroReferenceAccuracy) {
  EXPECT_EQ(relative_gain(0.2, 0.0, 0.0), std::numeric_limits<double>::infinity());
  EXPECT_EQ(relative_gain(0.0, 0.0, 0.0), 0.0);
  EXPECT_EQ(relative_gain(0.0, 0.1, 0.0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(run({0.0, 0.0}, 0.01).spec.name(), "ResNet_1_1_1_1");
  EXPECT_THROW(run({0.5, 1.5}, 0.01), ValidationError);
}

TEST_F(Selection, RealTrainingStepsRun) {
  auto c = quick(1);
  c.batch_size = 6;
  const auto r = forward_block_selection(full, data, data, c, 0.5);
  ASSERT_GE(r.state.history.size(), 2u);
  for (const auto& h : r.state.history) EXPECT_TRUE(h.accuracy >= 0.0 && h.accuracy <= 1.0);
  EXPECT_NO_THROW(evaluate(r.spec, r.store, data));
  // Weights continue from step to step: the initial conv1 no longer equals
  // the pretrained one.
  EXPECT_NE(r.store.get("conv1.weight"), full.get("conv1.weight"));
}

TEST(Csv, CurveColumns) {
  const auto csv = curve_csv({{1, 0.5, -1.0, 1.25}, {2, 0.75, 0.5, 0.5}});
  EXPECT_EQ(csv, "epoch,train_acc,test_acc,loss\r\n1,0.5,,1.25\r\n2,0.75,0.5,0.5\r\n");
}

}  // namespace
}  // namespace rrr
