// Copyright 2026 The dpmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include "dpmix/trainer.hpp"
#include "test_util.hpp"

namespace dpmix {
namespace {

LabeledDataset blobs(std::size_t per_class = 30, std::uint64_t seed = 1) {
  BlobSpec spec;
  spec.per_class = per_class;
  spec.separation = 1.0;
  spec.noise = 0.1;
  spec.seed = seed;
  return synth_blobs(spec);
}

TrainConfig quick(std::size_t epochs = 3) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch = 16;
  cfg.lr = 0.05;
  cfg.seed = 9;
  return cfg;
}

TEST(Augmentation, NamesRoundTrip) {
  for (auto k : {AugmentationKind::kNone, AugmentationKind::kMixup, AugmentationKind::kCutMix,
                 AugmentationKind::kCutout, AugmentationKind::kMaxUp})
    EXPECT_EQ(parse_augmentation(to_string(k)), k);
  EXPECT_THROW(parse_augmentation("mixupp"), InvalidArgument);
}

TEST(Train, LearnsSeparableBlobs) {
  const auto ds = blobs();
  const auto spec = ModelSpec::small_conv(ds.shape(), 3);
  const Model m = train(ds, spec, quick(5));
  ASSERT_EQ(m.log.size(), 5u);
  EXPECT_LT(m.log.back().loss, m.log.front().loss);
  EXPECT_GE(clean_accuracy(m, ds), 0.95);
}

TEST(Train, FixedSeedIsBitReproducible) {
  const auto ds = blobs();
  for (auto kind : {AugmentationKind::kNone, AugmentationKind::kMixup, AugmentationKind::kCutMix,
                    AugmentationKind::kMaxUp}) {
    TrainConfig cfg = quick(2);
    cfg.policy.kind = kind;
    cfg.policy.input_noise_sigma = 16.0 / 255;
    cfg.policy.maxup_warmup_epochs = 1;
    const auto spec = ModelSpec::small_conv(ds.shape(), 3);
    const Model a = train(ds, spec, cfg);
    const Model b = train(ds, spec, cfg);
    EXPECT_EQ(a.net.parameters(), b.net.parameters()) << to_string(kind);
    cfg.seed += 1;
    EXPECT_NE(train(ds, spec, cfg).net.parameters(), a.net.parameters()) << to_string(kind);
  }
}

TEST(Train, ZeroLearningRateKeepsInitialParameters) {
  const auto ds = blobs(10);
  const auto spec = ModelSpec::mlp(ds.shape(), 3, {8});
  TrainConfig cfg = quick(2);
  cfg.lr = 0;
  const Model m = train(ds, spec, cfg);
  Network<double> init(spec);
  init.initialize(derive_seed(cfg.seed, "init"));
  EXPECT_EQ(m.net.parameters(), init.parameters());
}

TEST(Train, DpSgdClipsEveryStep) {
  const auto ds = blobs();
  TrainConfig cfg = quick(3);
  cfg.dp_sgd = DpSgdConfig{1.0, 0.001};
  std::size_t steps = 0, clipped = 0;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) {
    ++steps;
    EXPECT_LE(s.clipped_grad_norm, 1.0 + 1e-9);
    if (s.raw_grad_norm > 1.0) ++clipped;
  };
  train(ds, ModelSpec::small_conv(ds.shape(), 3), cfg, hooks);
  EXPECT_EQ(steps, 3u * ((ds.size() + 15) / 16));
  EXPECT_GT(clipped, 0u);
}

TEST(Train, MaxUpWithOneCandidateEqualsCutout) {
  const auto ds = blobs(15);
  const auto spec = ModelSpec::small_conv(ds.shape(), 3);
  TrainConfig cut = quick(3);
  cut.policy.kind = AugmentationKind::kCutout;
  TrainConfig max = cut;
  max.policy.kind = AugmentationKind::kMaxUp;
  max.policy.maxup_candidates = 1;
  max.policy.maxup_warmup_epochs = 0;
  EXPECT_EQ(train(ds, spec, cut).net.parameters(), train(ds, spec, max).net.parameters());
  max.policy.maxup_candidates = 4;
  EXPECT_NE(train(ds, spec, cut).net.parameters(), train(ds, spec, max).net.parameters());
}

TEST(Train, DivergenceIsReported) {
  const auto ds = blobs(10);
  TrainConfig cfg = quick(5);
  cfg.lr = 1e100;
  cfg.momentum = 0;
  try {
    train(ds, ModelSpec::mlp(ds.shape(), 3, {8}), cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    SUCCEED() << e.batch_index();
  }
}

TEST(Train, RejectsBadConfigAndShapes) {
  const auto ds = blobs(5);
  TrainConfig cfg = quick();
  cfg.momentum = 1.0;
  EXPECT_THROW(train(ds, ModelSpec::mlp(ds.shape(), 3, {4}), cfg), InvalidArgument);
  EXPECT_THROW(train(ds, ModelSpec::mlp({4, 4, 1}, 3, {4}), quick()), InvalidArgument);
  EXPECT_THROW(train(ds, ModelSpec::mlp(ds.shape(), 4, {4}), quick()), InvalidArgument);
}

TEST(Train, EvalHookAndLogCsv) {
  const auto ds = blobs(10);
  TrainHooks hooks;
  hooks.eval = &ds;
  const Model m = train(ds, ModelSpec::mlp(ds.shape(), 3, {8}), quick(2), hooks);
  ASSERT_TRUE(m.log[1].test_acc);
  const std::string csv = training_log_csv(m);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss,train_acc,test_acc");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Checkpoint, RoundTripPredictsIdentically) {
  const auto ds = blobs(10);
  const Model m = train(ds, ModelSpec::small_conv(ds.shape(), 3), quick(2));
  const auto dir = testing::scratch("ckpt");
  save_checkpoint(dir / "m.dpmc", m);
  const Model back = load_checkpoint(dir / "m.dpmc");
  EXPECT_EQ(back.spec, m.spec);
  for (const auto& e : ds.examples) EXPECT_EQ(predict(back, e.image).label, predict(m, e.image).label);
  EXPECT_TRUE(back.net.parameters().isApprox(m.net.parameters(), 1e-6));
  EXPECT_THROW(load_checkpoint(dir / "missing.dpmc"), FormatError);
}

TEST(Evaluate, FeaturesAndPoisonSuccess) {
  const auto ds = blobs(10);
  const Model m = train(ds, ModelSpec::small_conv(ds.shape(), 3), quick(3));
  const Eigen::MatrixXd f = extract_features(m, ds);
  EXPECT_EQ(f.rows(), 30);
  EXPECT_EQ(f.cols(), m.net.feature_dim());
  const double hit = poison_success(m, ds, 0);
  EXPECT_NEAR(hit, static_cast<double>(ds.indices_of_class(0).size()) / 30.0, 0.1);
}

}  // namespace
}  // namespace dpmix
