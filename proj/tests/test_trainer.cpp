// Copyright 2026 The TTQ Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ttq/errors.hpp"
#include "ttq/trainer.hpp"

namespace ttq {
namespace {

ModelSpec moons_spec(QuantizerKind middle) {
  ModelSpec s;
  s.input_shape = {2};
  s.layers = {{DenseShape{2, 32}}, {DenseShape{32, 32}, middle}, {DenseShape{32, 32}, middle},
              {DenseShape{32, 2}}};
  return s;
}

DataSplit moons(std::size_t n = 300) { return {make_moons(n, 0.1, 1), make_moons(n, 0.1, 2)}; }

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.optimizer = AdamConfig{0.01};
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.seed = 3;
  return cfg;
}

double max_latent_diff(const Model& a, const Model& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    const Tensor& x = a.layers()[i].latent_weights;
    const Tensor& y = b.layers()[i].latent_weights;
    for (std::size_t k = 0; k < x.size(); ++k) {
      d = std::max(d, std::abs(x[k] - y[k]));
    }
  }
  return d;
}

TEST(Train, ZeroEpochsLeavesModelUntouched) {
  const Model m = Model::initialize(moons_spec(QuantizerKind::TTQ), 1);
  const TrainResult r = train(m, moons(), quick_config(0));
  EXPECT_TRUE(r.report.epochs.empty());
  EXPECT_TRUE(r.report.steps.empty());
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    EXPECT_EQ(r.model.layers()[i].latent_weights, m.layers()[i].latent_weights);
    EXPECT_EQ(r.model.layers()[i].codebook, m.layers()[i].codebook);
  }
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const Model m = Model::initialize(moons_spec(QuantizerKind::TTQ), 1);
  TrainConfig cfg = quick_config(2);
  cfg.optimizer = SgdConfig{0.0, 0.9};
  const TrainResult r = train(m, moons(), cfg);
  EXPECT_EQ(max_latent_diff(r.model, m), 0.0);
  EXPECT_EQ(r.model.layers()[1].codebook, m.layers()[1].codebook);
  EXPECT_EQ(r.report.epochs.size(), 2u);
}

TEST(Train, MoonsFullPrecisionAndTernary) {
  const DataSplit data = moons();
  const TrainResult fp = train(Model::initialize(moons_spec(QuantizerKind::None), 4), data, quick_config(100));
  const TrainResult tq = train(Model::initialize(moons_spec(QuantizerKind::TTQ), 4), data, quick_config(100));
  const double fp_err = evaluate(fp.model, data.train).error;
  const double tq_err = evaluate(tq.model, data.train).error;
  EXPECT_LT(fp_err, 0.05);
  EXPECT_LE(tq_err, fp_err + 0.03);
  EXPECT_LT(fp.report.epochs.back().train_loss, fp.report.epochs.front().train_loss);
}

TEST(Train, CodebooksStayPositiveAndAsymmetric) {
  TrainConfig cfg = quick_config(20);
  cfg.codebook_lr_multiplier = 5.0;
  const TrainResult r = train(Model::initialize(moons_spec(QuantizerKind::TTQ), 2), moons(), cfg);
  bool asymmetric = false;
  for (const StepRecord& s : r.report.steps) {
    for (const LayerStepRecord& l : s.layers) {
      ASSERT_GE(l.w_pos, TernaryCodebook::kFloor);
      ASSERT_GE(l.w_neg, TernaryCodebook::kFloor);
      asymmetric = asymmetric || l.w_pos != l.w_neg;
    }
  }
  EXPECT_TRUE(asymmetric);
}

TEST(Train, StepRecordsCoverQuantizedLayers) {
  const TrainResult r = train(Model::initialize(moons_spec(QuantizerKind::TTQ), 2), moons(96), quick_config(2));
  ASSERT_EQ(r.report.steps.size(), 6u);  // 96 / 32 steps per epoch
  for (const StepRecord& s : r.report.steps) {
    ASSERT_EQ(s.layers.size(), 2u);
    EXPECT_EQ(s.layers[0].layer, 1u);
    EXPECT_EQ(s.layers[1].layer, 2u);
  }
  EXPECT_EQ(r.report.steps.front().layers[0].churn, 0.0);
}

TEST(Train, ConstantFactorSparsityDiffersAcrossLayers) {
  ModelSpec s;
  s.input_shape = {2};
  s.layers = {{DenseShape{2, 16}}, {DenseShape{16, 64}}, {DenseShape{64, 8}}, {DenseShape{8, 2}}};
  const TrainResult r = train(Model::initialize(s, 9), moons(), quick_config(3));
  const StepRecord& last = r.report.steps.back();
  ASSERT_EQ(last.layers.size(), 2u);
  EXPECT_NE(last.layers[0].sparsity, last.layers[1].sparsity);
}

TEST(Train, BitIdenticalAcrossRuns) {
  const DataSplit data = moons();
  const Model m = Model::initialize(moons_spec(QuantizerKind::TTQ), 5);
  const TrainResult a = train(m, data, quick_config(3));
  const TrainResult b = train(m, data, quick_config(3));
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.report.to_jsonl(), b.report.to_jsonl());
  EXPECT_EQ(max_latent_diff(a.model, b.model), 0.0);
}

TEST(Report, JsonlRoundTrip) {
  const TrainResult a = train(Model::initialize(moons_spec(QuantizerKind::TTQ), 5), moons(), quick_config(2));
  std::istringstream in(a.report.to_jsonl());
  EXPECT_EQ(TrainReport::read_jsonl(in), a.report);
}

TEST(Report, SmoothedValidationError) {
  TrainReport r;
  r.epochs = {{0, 0.1, 0, 0, 0, 0.4}, {1, 0.1, 0, 0, 0, 0.2}, {2, 0.1, 0, 0, 0, 0.3}};
  const std::vector<double> s = r.smoothed_val_errors();
  ASSERT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s[0], 0.4);
  EXPECT_DOUBLE_EQ(s[1], 0.3);
  EXPECT_DOUBLE_EQ(s[2], 0.3);
}

TEST(Train, DivergenceAborts) {
  TrainConfig cfg = quick_config(20);
  cfg.optimizer = SgdConfig{1e30, 0.0};
  EXPECT_THROW(train(Model::initialize(moons_spec(QuantizerKind::None), 1), moons(), cfg), NonFiniteError);
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg = quick_config(1);
  cfg.batch_size = 0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = quick_config(1);
  cfg.lr_schedule = {{5, 0.1}, {3, 0.1}};
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = quick_config(1);
  cfg.lr_schedule = {{5, 0.0}};
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = quick_config(1);
  cfg.optimizer = SgdConfig{0.1, 1.0};
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = quick_config(1);
  cfg.optimizer = AdamConfig{-1.0};
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = quick_config(1);
  cfg.weight_decay = -0.1;
  EXPECT_THROW(validate(cfg), ConfigError);
  EXPECT_NO_THROW(validate(quick_config(1)));
}

TEST(Schedule, MilestonesMultiply) {
  const std::vector<LrMilestone> sched{{2, 0.1}, {4, 0.5}};
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(1.0, sched, 0), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(1.0, sched, 2), 0.1);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(1.0, sched, 5), 0.05);
}

TEST(Finetune, ZeroEpochsCopiesLatentWeights) {
  const Model full = Model::initialize(moons_spec(QuantizerKind::None), 6);
  const TrainResult r = finetune_from(full, moons_spec(QuantizerKind::TTQ), moons(), quick_config(0));
  EXPECT_EQ(max_latent_diff(r.model, full), 0.0);
  EXPECT_EQ(r.model.layers()[1].quantizer, QuantizerKind::TTQ);
  EXPECT_EQ(r.model.layers()[1].codebook->w_pos,
            twn_threshold_and_scale(full.layers()[1].latent_weights).scale);
}

TEST(Finetune, ArchitectureMismatch) {
  const Model full = Model::initialize(moons_spec(QuantizerKind::None), 6);
  ModelSpec other = moons_spec(QuantizerKind::TTQ);
  other.layers[1].kind = DenseShape{32, 16};
  other.layers[2].kind = DenseShape{16, 32};
  EXPECT_THROW(adopt_weights(full, other), ArchitectureMismatchError);
}

TEST(Finetune, NoWorseThanFromScratchOnShortBudget) {
  const DataSplit data{make_moons(300, 0.2, 1), make_moons(300, 0.2, 2)};
  const TrainResult pre = train(Model::initialize(moons_spec(QuantizerKind::None), 7), data, quick_config(30));
  const TrainResult tuned = finetune_from(pre.model, moons_spec(QuantizerKind::TTQ), data, quick_config(3));
  const TrainResult scratch = train(Model::initialize(moons_spec(QuantizerKind::TTQ), 7), data, quick_config(3));
  EXPECT_LE(tuned.report.epochs.back().val_error, scratch.report.epochs.back().val_error);
}

TEST(Evaluate, PerfectAndChanceClassifiers) {
  Dataset d;
  d.inputs = Tensor::matrix({{1, 0}, {0, 1}, {1, 0}, {0, 1}});
  d.labels = {0, 1, 0, 1};
  d.num_classes = 2;
  const Evaluation perfect = evaluate_with([](const Tensor& x) { return ops::matmul(x, Tensor::matrix({{10, 0}, {0, 10}})); }, d);
  EXPECT_EQ(perfect.error, 0.0);
  EXPECT_LT(perfect.loss, 1e-4);
  const Evaluation flat = evaluate_with([](const Tensor& x) { return Tensor(Shape{x.dim(0), 2}); }, d);
  EXPECT_NEAR(flat.loss, std::log(2.0), 1e-12);
  const Evaluation wrong = evaluate_with([](const Tensor& x) { return ops::matmul(x, Tensor::matrix({{0, 1}, {1, 0}})); }, d, 3);
  EXPECT_EQ(wrong.error, 1.0);
}

TEST(Evaluate, PureAndBatchIndependent) {
  const DataSplit data = moons();
  const Model m = Model::initialize(moons_spec(QuantizerKind::TTQ), 8);
  const Evaluation a = evaluate(m, data.val);
  const Evaluation b = evaluate(m, data.val);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.error, b.error);
  EXPECT_NEAR(evaluate(m, data.val, 7).loss, a.loss, 1e-12);
}

TEST(Sweep, OneRowPerTargetAndThreadIndependent) {
  const Model m = Model::initialize(moons_spec(QuantizerKind::TTQ), 8);
  const std::vector<double> rs{0.0, 0.5, 0.9};
  TrainConfig cfg = quick_config(2);
  cfg.record_steps = false;
  const std::vector<SweepRow> serial = sparsity_sweep(m, moons(), rs, cfg, 1);
  const std::vector<SweepRow> parallel = sparsity_sweep(m, moons(), rs, cfg, 3);
  ASSERT_EQ(serial.size(), 3u);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    EXPECT_EQ(serial[i].r, rs[i]);
    EXPECT_EQ(serial[i].val_error, parallel[i].val_error);
    EXPECT_GE(serial[i].achieved_sparsity, rs[i]);
    EXPECT_LE(serial[i].achieved_sparsity, rs[i] + 1.0 / 1024.0 + 1e-12);
  }
}

}  // namespace
}  // namespace ttq
