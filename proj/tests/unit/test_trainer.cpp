// Copyright 2026 The sfskit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "sfskit/trainer.hpp"
#include "temp_dir.hpp"

namespace sfskit::trainer {
namespace {

using datagen::Family;
using datagen::Supervision;

datagen::DatasetOptions small_opts() {
  datagen::DatasetOptions o;
  o.size = 32;
  return o;
}

const std::vector<Sample>& synthetic_set() {
  static const auto s = datagen::make_dataset(24, 1, Family::kSynthetic, small_opts());
  return s;
}

const std::vector<Sample>& pseudo_set() {
  static const auto s = [] {
    auto model = nets::build_skipnet({32, 0.125, 1, 1});
    return datagen::pseudo_label(*model,
                                 datagen::make_dataset(16, 2, Family::kPseudoReal, small_opts()));
  }();
  return s;
}

TrainConfig quick(long long steps) {
  TrainConfig c;
  c.batch_size = 4;
  c.steps = steps;
  c.seed = 3;
  return c;
}

std::vector<std::vector<float>> snapshot(const nets::Model& m) {
  std::vector<std::vector<float>> out;
  for (const auto& e : m.state(false)) out.push_back(e.data);
  return out;
}

TEST(Config, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(validate(c));
  c.mix_ratio = 1.5;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = {};
  c.weights.light = -1;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = {};
  c.checkpoint_every = 5;
  EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Sampler, CompositionHonoursMixRatioEveryBatch) {
  for (double mix : {0.0, 0.25, 0.3, 0.5, 0.9, 1.0}) {
    TrainConfig c;
    c.mix_ratio = mix;
    c.batch_size = 16;
    const int want_p = static_cast<int>(std::floor(mix * 16 + 1e-9));
    EXPECT_EQ(pseudo_per_batch(c), want_p);
    for (long long step = 0; step < 300; ++step) {
      const BatchPlan p = plan_batch(c, step, 37, 23);
      ASSERT_EQ(static_cast<int>(p.pseudo.size()), want_p);
      ASSERT_EQ(static_cast<int>(p.synthetic.size()), 16 - want_p);
      for (auto i : p.synthetic) ASSERT_LT(i, 37u);
      for (auto i : p.pseudo) ASSERT_LT(i, 23u);
    }
  }
}

TEST(Sampler, PureFunctionOfStepAndCoversEachPass) {
  TrainConfig c;
  c.batch_size = 10;
  c.mix_ratio = 0.5;
  const BatchPlan a = plan_batch(c, 17, 40, 40);
  plan_batch(c, 3, 40, 40);
  const BatchPlan b = plan_batch(c, 17, 40, 40);
  EXPECT_EQ(a.synthetic, b.synthetic);
  EXPECT_EQ(a.pseudo, b.pseudo);
  // Five synthetic draws per step; eight steps are one pass over 40 samples.
  std::multiset<std::size_t> seen;
  for (long long step = 0; step < 8; ++step) {
    for (auto i : plan_batch(c, step, 40, 40).synthetic) seen.insert(i);
  }
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(seen.count(i), 1u) << i;
  c.seed = 4;
  EXPECT_NE(plan_batch(c, 17, 40, 40).synthetic, a.synthetic);
}

TEST(Sampler, NeedsTheSetsItDrawsFrom) {
  TrainConfig c;
  EXPECT_THROW(plan_batch(c, 0, 10, 0), std::invalid_argument);
  c.mix_ratio = 1.0;
  EXPECT_NO_THROW(plan_batch(c, 0, 0, 10));
}

TEST(BatchLoss, ReconstructionTargetsTheInputImage) {
  auto model = nets::build_sfsnet({32, 0.125, 1, 1});
  Sample s = pseudo_set()[0];
  const BatchLoss a = batch_loss(*model, {&s}, {}, ad::NormMode::kEval);
  // Changing the supervision targets leaves the reconstruction term alone.
  for (float& v : s.albedo.values()) v = 0.5f;
  s.light = LightSH::ambient(0.3f);
  const BatchLoss b = batch_loss(*model, {&s}, {}, ad::NormMode::kEval);
  EXPECT_EQ(a.values.recon, b.values.recon);
  EXPECT_NE(a.values.albedo, b.values.albedo);
  for (float& v : s.image.values()) v *= 0.5f;
  EXPECT_NE(batch_loss(*model, {&s}, {}, ad::NormMode::kEval).values.recon, b.values.recon);
  const LossWeights w;
  EXPECT_NEAR(a.values.total,
              w.recon * a.values.recon + w.normal * a.values.normal + w.albedo * a.values.albedo +
                  w.light * a.values.light,
              1e-5);
}

TEST(StageA, ZeroStepsLeavesParametersUntouched) {
  auto model = nets::build_skipnet({32, 0.125, 1, 1});
  const auto before = snapshot(*model);
  const StageReport r = train_stage_a(*model, synthetic_set(), quick(0));
  EXPECT_EQ(r.steps_run, 0);
  EXPECT_EQ(snapshot(*model), before);
}

TEST(StageA, RefusesReconstructionOnlyAndPseudoRealData) {
  auto model = nets::build_skipnet({32, 0.125, 1, 1});
  TrainConfig c = quick(2);
  c.weights = {1.0, 0.0, 0.0, 0.0};
  EXPECT_THROW(train_stage_a(*model, synthetic_set(), c), std::invalid_argument);
  c.steps = 0;
  EXPECT_NO_THROW(train_stage_a(*model, synthetic_set(), c));
  EXPECT_THROW(train_stage_a(*model, pseudo_set(), quick(1)), std::invalid_argument);
}

TEST(StageA, DeterministicAndReported) {
  auto run = [] {
    auto model = nets::build_skipnet({32, 0.125, 1, 1});
    TrainConfig c = quick(7);
    return train_stage_a(*model, synthetic_set(), c);
  };
  const StageReport a = run();
  const StageReport b = run();
  ASSERT_EQ(a.step_losses.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(a.step_losses[i].total, b.step_losses[i].total);
  EXPECT_EQ(a.steps_per_epoch, 6);
  ASSERT_EQ(a.epoch_losses.size(), 2u);
  EXPECT_NEAR(a.epoch_losses[1].total, a.step_losses[6].total, 1e-12);
  EXPECT_EQ(a.stage, "stage-a");
}

TEST(StageA, LossDecreasesWithTraining) {
  auto model = nets::build_skipnet({32, 0.25, 1, 1});
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 30;
  const StageReport r = train_stage_a(*model, synthetic_set(), c);
  ASSERT_EQ(r.epoch_losses.size(), 30u);
  // Ten-epoch moving average.
  std::vector<double> smooth;
  for (std::size_t e = 10; e <= 30; ++e) {
    double s = 0;
    for (std::size_t k = e - 10; k < e; ++k) s += r.epoch_losses[k].total;
    smooth.push_back(s / 10);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1] + 1e-3) << i;
  EXPECT_LT(smooth.back(), 0.6 * smooth.front());
}

TEST(StageC, RejectsUnlabelledPseudoReal) {
  auto model = nets::build_sfsnet({32, 0.125, 1, 1});
  const auto raw = datagen::make_dataset(4, 2, Family::kPseudoReal, small_opts());
  EXPECT_THROW(train_stage_c(*model, synthetic_set(), raw, quick(1)), std::invalid_argument);
  EXPECT_THROW(train_stage_c(*model, pseudo_set(), pseudo_set(), quick(1)), std::invalid_argument);
}

TEST(StageC, MixZeroEqualsStageA) {
  auto a = nets::build_sfsnet({32, 0.125, 1, 1});
  auto b = nets::build_sfsnet({32, 0.125, 1, 1});
  TrainConfig c = quick(3);
  c.mix_ratio = 0.0;
  const StageReport ra = train_stage_a(*a, synthetic_set(), c);
  const StageReport rc = train_stage_c(*b, synthetic_set(), pseudo_set(), c);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ra.step_losses[i].total, rc.step_losses[i].total);
  EXPECT_EQ(snapshot(*a), snapshot(*b));
}

TEST(StageC, MixOneUsesOnlyPseudoLabels) {
  auto model = nets::build_sfsnet({32, 0.125, 1, 1});
  TrainConfig c = quick(2);
  c.mix_ratio = 1.0;
  const StageReport r = train_stage_c(*model, {}, pseudo_set(), c);
  EXPECT_EQ(r.steps_run, 2);
}

TEST(Checkpointing, ResumeFollowsUninterruptedTrajectory) {
  sfskit::testing::TempDir dir;
  const auto arch = nets::Architecture::kSfsNet;
  const nets::NetConfig net{32, 0.125, 1, 1};
  TrainConfig c = quick(6);
  c.mix_ratio = 0.5;

  auto full = nets::build_model(arch, net);
  const StageReport whole = train_stage_c(*full, synthetic_set(), pseudo_set(), c);

  auto first = nets::build_model(arch, net);
  TrainConfig c1 = c;
  c1.steps = 3;
  c1.checkpoint_every = 3;
  c1.checkpoint_path = dir / "run.ckpt";
  train_stage_c(*first, synthetic_set(), pseudo_set(), c1);

  auto second = nets::build_model(arch, net);
  TrainConfig c2 = c;
  c2.resume_from = dir / "run.ckpt";
  const StageReport resumed = train_stage_c(*second, synthetic_set(), pseudo_set(), c2);
  ASSERT_EQ(resumed.step_losses.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(resumed.step_losses[i].total, whole.step_losses[i].total) << i;
  }
  EXPECT_EQ(snapshot(*second), snapshot(*full));

  TrainConfig other = c2;
  other.seed = 99;
  auto third = nets::build_model(arch, net);
  EXPECT_THROW(train_stage_c(*third, synthetic_set(), pseudo_set(), other), std::invalid_argument);
  TrainConfig missing = c;
  missing.resume_from = dir / "absent.ckpt";
  try {
    train_stage_c(*third, synthetic_set(), pseudo_set(), missing);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("absent.ckpt"), std::string::npos);
  }
}

TEST(Divergence, NonFiniteLossAbortsWithSnapshot) {
  sfskit::testing::TempDir dir;
  auto data = synthetic_set();
  for (auto& s : data) s.image.values()[100] = std::numeric_limits<float>::quiet_NaN();
  for (auto& s : data) s.mask.set(std::size_t(100 / 3), true);
  auto model = nets::build_skipnet({32, 0.125, 1, 1});
  TrainConfig c = quick(2);
  c.checkpoint_path = dir / "x.ckpt";
  EXPECT_THROW(train_stage_a(*model, data, c), TrainingDiverged);
  EXPECT_TRUE(std::filesystem::exists(dir / "x.ckpt.diverged"));
}

TEST(Benchmark, DirectionsAndIdealEstimator) {
  const auto dirs = benchmark_light_directions(19);
  ASSERT_EQ(dirs.size(), 19u);
  EXPECT_LT(dirs.front().x(), -0.9);
  EXPECT_GT(dirs.back().x(), 0.9);
  for (const auto& d : dirs) EXPECT_NEAR(d.norm(), 1.0, 1e-12);

  LightBenchmarkOptions o;
  o.num_subjects = 4;
  o.size = 32;
  const LightBenchmark b = make_light_benchmark(o);
  EXPECT_EQ(b.train.size(), 38u);
  EXPECT_EQ(b.test.size(), 38u);
  EXPECT_NE(b.train[0].normal, b.test[0].normal);
  const LightClassReport r = eval_light_classification_ideal(b);
  EXPECT_EQ(r.top1, 100.0);
}

TEST(Paradigms, NamesAndSmallRunIsReproducible) {
  for (Paradigm p : all_paradigms()) EXPECT_EQ(parse_paradigm(to_string(p)), p);
  EXPECT_THROW(parse_paradigm("sfsnet"), std::invalid_argument);

  auto run_all = [] {
    ParadigmConfig cfg;
    cfg.n_synthetic = 8;
    cfg.n_pseudo_real = 8;
    cfg.n_heldout = 3;
    cfg.net = {32, 0.125, 1, 1};
    cfg.stage_a = quick(2);
    cfg.stage_c = quick(2);
    cfg.benchmark.num_subjects = 2;
    ParadigmRunner runner(cfg);
    std::vector<ParadigmRow> rows;
    for (Paradigm p : all_paradigms()) rows.push_back(runner.run(p));
    EXPECT_EQ(runner.reports().count("skipnet-stage-a"), 1u);
    EXPECT_EQ(runner.reports().count("sfsnet-full"), 1u);
    return rows;
  };
  const auto a = run_all();
  const auto b = run_all();
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(format_paradigm_table(a), format_paradigm_table(b));
  EXPECT_EQ(a[0].paradigm, "skipnet-syn");
  for (const auto& r : a) EXPECT_GT(r.recon.mae, 0.0);
}

}  // namespace
}  // namespace sfskit::trainer
