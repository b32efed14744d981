/* Copyright 2026 The ODPC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "odpc/trainer.hpp"

#include <gtest/gtest.h>

#include "odpc/bench.hpp"
#include "oracles.hpp"

namespace odpc {
namespace {

HeadParameters<double> filled(double v) {
  auto p = init_head<double>(2, 0, 0, HeadShape{1, {1, 1, 1}}).params;
  p.for_each([&](const std::string&, double* d, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) d[i] = v;
  });
  return p;
}

std::vector<double> flatten(const HeadParameters<double>& p) {
  std::vector<double> out;
  p.for_each([&](const std::string&, const double* d, Eigen::Index r, Eigen::Index c) {
    out.insert(out.end(), d, d + r * c);
  });
  return out;
}

TEST(ScheduleTest, StepDecay) {
  TrainingConfig cfg;
  EXPECT_DOUBLE_EQ(lr_at(0, cfg), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at(29, cfg), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at(30, cfg), 2.5e-6);
  EXPECT_NEAR(lr_at(159, cfg), 9.765625e-9, 1e-20);
  EXPECT_THROW(lr_at(-1, cfg), Error);
}

TEST(SgdStepTest, PlainStep) {
  auto theta = filled(1.0), v = filled(0.0);
  sgd_step(theta, v, filled(0.5), 0.1, 0.0);
  for (double x : flatten(theta)) EXPECT_DOUBLE_EQ(x, 0.95);
}

TEST(SgdStepTest, MomentumAccumulates) {
  auto theta = filled(0.0), v = filled(0.0);
  const auto g = filled(1.0);
  sgd_step(theta, v, g, 0.1, 0.9);
  for (double x : flatten(theta)) EXPECT_NEAR(x, -0.1, 1e-15);
  sgd_step(theta, v, g, 0.1, 0.9);
  for (double x : flatten(theta)) EXPECT_NEAR(x, -0.29, 1e-15);
}

TEST(SgdStepTest, ZeroLearningRateUpdatesOnlyBuffers) {
  auto theta = filled(2.0), v = filled(1.0);
  sgd_step(theta, v, filled(3.0), 0.0, 0.5);
  for (double x : flatten(theta)) EXPECT_EQ(x, 2.0);
  for (double x : flatten(v)) EXPECT_EQ(x, 3.5);
}

TEST(SgdStepTest, ShapeMismatch) {
  auto theta = filled(1.0), v = filled(0.0);
  const auto other = init_head<double>(2, 1, 0, HeadShape{1, {1, 1, 1}}).params;
  EXPECT_THROW(sgd_step(theta, v, other, 0.1, 0.0), Error);
}

TrainingData<float> small_data(std::uint64_t seed, int n = 48, int dim = 12) {
  Rng rng(seed);
  TrainingData<float> d;
  d.images = oracle::random_matrix<float>(rng, n, dim);
  for (int i = 0; i < n; ++i) d.labels.push_back(i % 3);
  d.class_texts = oracle::random_matrix<float>(rng, 3, dim);
  for (int c = 0; c < 3; ++c) d.peer_texts.push_back(oracle::random_matrix<float>(rng, 2, dim));
  return d;
}

TrainingConfig quick_config(int epochs) {
  TrainingConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.lr = 1e-3;
  cfg.momentum = 0.9;
  cfg.loss.temperature = 0.1;
  cfg.seed = 3;
  return cfg;
}

void quiet(std::string_view) {}

TEST(TrainTest, Deterministic) {
  const auto data = small_data(1);
  const auto head = init_head(3, 6, 5, HeadShape{12, {10, 8, 6}});
  const auto a = train(data, head, quick_config(4), quiet);
  const auto b = train(data, head, quick_config(4), quiet);
  ASSERT_EQ(a.history.size(), 4u);
  EXPECT_EQ(loss_history_csv(a.history), loss_history_csv(b.history));
  EXPECT_EQ(a.head.params.weights[0], b.head.params.weights[0]);
  EXPECT_EQ(a.head.params.classifier_weight, b.head.params.classifier_weight);
  EXPECT_EQ(a.head.epoch, 4);
}

TEST(TrainTest, ZeroEpochsLeavesHeadUnchanged) {
  const auto data = small_data(2);
  const auto head = init_head(3, 6, 5, HeadShape{12, {10, 8, 6}});
  const auto s = train(data, head, quick_config(0), quiet);
  EXPECT_TRUE(s.history.empty());
  EXPECT_EQ(s.head.params.weights[1], head.params.weights[1]);
  EXPECT_EQ(s.head.params.classifier_bias, head.params.classifier_bias);
}

TEST(TrainTest, SingleClassBatchesAreSkipped) {
  auto data = small_data(3, 40);
  for (std::size_t i = 0; i < data.labels.size(); ++i) data.labels[i] = i < 38 ? 0 : 1;
  auto cfg = quick_config(3);
  cfg.batch_size = 4;
  int logged = 0;
  const auto s = train(data, init_head(3, 6, 1, HeadShape{12, {10, 8, 6}}), cfg,
                       [&](std::string_view) { ++logged; });
  int skipped = 0;
  for (const auto& r : s.history) {
    skipped += r.skipped_batches;
    EXPECT_EQ(r.steps + r.skipped_batches, 10);
  }
  EXPECT_GT(skipped, 0);
  EXPECT_EQ(logged, skipped);
}

TEST(TrainTest, RejectsBadData) {
  auto data = small_data(4);
  data.labels[0] = 7;
  EXPECT_THROW(train(data, init_head(3, 6, 1, HeadShape{12, {10, 8, 6}}), quick_config(1), quiet), Error);
  auto one_class = small_data(4);
  std::fill(one_class.labels.begin(), one_class.labels.end(), 1);
  EXPECT_THROW(train(one_class, init_head(3, 6, 1, HeadShape{12, {10, 8, 6}}), quick_config(1), quiet), Error);
  auto tiny = small_data(4, 5);
  EXPECT_THROW(train(tiny, init_head(3, 6, 1, HeadShape{12, {10, 8, 6}}), quick_config(1), quiet), Error);
}

TEST(TrainTest, PeersRequiredWhenContrastiveTermIsOn) {
  auto data = small_data(5);
  data.peer_texts[1] = MatrixF(0, 12);
  auto cfg = quick_config(1);
  cfg.loss.use_mixup = false;
  try {
    train(data, init_head(3, 6, 1, HeadShape{12, {10, 8, 6}}), cfg, quiet);
    FAIL() << "expected a configuration error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfiguration);
  }
  cfg.loss.use_pcc = false;
  EXPECT_NO_THROW(train(data, init_head(3, 6, 1, HeadShape{12, {10, 8, 6}}), cfg, quiet));
}

TEST(TrainTest, LossDecreasesOnSyntheticData) {
  SyntheticBenchmark bench(SyntheticSetup{}, PeerGenConfig{});
  const auto in = bench.inputs();
  const auto opt = synthetic_options();
  for (std::uint64_t seed : {7u, 8u}) {
    const auto p = prepare_repeat(in, opt, seed);
    auto cfg = opt.training;
    cfg.seed = seed;
    const auto head = init_head(6, static_cast<int>(p.peer_labels.size()), seed);
    const auto s = train(p.training, head, cfg, quiet);
    ASSERT_EQ(s.history.size(), static_cast<std::size_t>(cfg.epochs));
    EXPECT_LT(s.history.back().loss.total, s.history.front().loss.total) << "seed " << seed;
  }
}

TEST(LossHistoryTest, CsvLayout) {
  EpochRecord r;
  r.epoch = 2;
  r.lr = 2.5e-6;
  r.loss.pcc = {1.0, 2.0, 3.0};
  r.loss.ce = 0.5;
  r.loss.total = 6.5;
  EXPECT_EQ(loss_history_csv({r}), "epoch,lr,total,pcc1,pcc2,pcc3,ce\n2,2.5e-06,6.5,1,2,3,0.5\n");
}

}  // namespace
}  // namespace odpc
