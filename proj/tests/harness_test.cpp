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

#include "dpmix/harness.hpp"
#include "test_util.hpp"

namespace dpmix {
namespace {

const char* kTiny = R"(# tiny end-to-end run
experiment.trials = 2
experiment.seed = 3
data.source = blobs
data.per_class = 20
data.separation = 0.8
attack.kind = backdoor
model.arch = mlp
model.hidden = 16
trainer.epochs = 2
trainer.batch = 16
trainer.lr = 0.05
)";

TEST(Config, ParsesKeysAndFractions) {
  const auto cfg = ExperimentConfig::parse(std::string(kTiny) + "defense.kind = certified_release\n"
                                                                "defense.release_sigma = 16/255\n");
  EXPECT_EQ(cfg.trials, 2u);
  EXPECT_EQ(cfg.master_seed, 3u);
  EXPECT_EQ(cfg.model.architecture, Architecture::kMlp);
  EXPECT_EQ(cfg.model.hidden, std::vector<std::size_t>{16});
  EXPECT_DOUBLE_EQ(cfg.defense.release_sigma, 16.0 / 255.0);
  EXPECT_EQ(cfg.defense.kind, DefenseKind::kCertifiedRelease);
}

TEST(Config, RejectsUnknownDuplicateAndMalformed) {
  EXPECT_THROW(ExperimentConfig::parse("trainer.lrr = 0.1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("trainer.lr = 0.1\ntrainer.lr = 0.2\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("trainer.lr 0.1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("trainer.lr = fast\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("experiment.trials = 0\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("defense.kind = prayer\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("defense.release_sigma = 1/0\ndefense.kind = certified_release\n"),
               ConfigError);
}

TEST(Config, OneDefensePathway) {
  EXPECT_THROW(ExperimentConfig::parse("defense.kind = spectral\ntrainer.augmentation = mixup\n"),
               ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("defense.kind = none\ntrainer.input_noise = 0.1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("defense.kind = dp_sgd\nsweep.k = 2\n"), ConfigError);
  EXPECT_NO_THROW(ExperimentConfig::parse("defense.kind = augmentation\ntrainer.augmentation = mixup\n"));
}

TEST(Sweep, FigureShapeAndBound) {
  std::vector<std::uint64_t> ks = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> sigmas = {2.0 / 255, 4.0 / 255, 8.0 / 255, 16.0 / 255, 32.0 / 255};
  const auto rows = sweep_epsilon(50000, 50000, ks, sigmas, 1.0);
  ASSERT_EQ(rows.size(), 40u);
  for (std::size_t s = 0; s < sigmas.size(); ++s)
    for (std::size_t k = 0; k < ks.size(); ++k) {
      const auto& r = rows[s * ks.size() + k];
      EXPECT_LE(*r.epsilon, *r.upper_bound);
      if (k > 0) EXPECT_LT(*r.epsilon, *rows[s * ks.size() + k - 1].epsilon);
      if (s > 0) EXPECT_LT(*r.epsilon, *rows[(s - 1) * ks.size() + k].epsilon);
    }
  // Reference points at s = 16/255.
  EXPECT_NEAR(*rows[3 * 8 + 3].epsilon, 210.56274696224616, 1e-9);
}

TEST(Sweep, CsvRoundTripAndVerification) {
  auto rows = sweep_epsilon(1000, 500, {1, 2, 4}, {0.1, 0.5}, 1.0);
  const std::string csv = sweep_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), sweep_csv_header());
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  const auto back = parse_sweep_csv(parse_csv(csv));
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_EQ(sweep_csv(back), csv);
  EXPECT_LT(verify_sweep_rows(back), 1e-15);
  auto tampered = back;
  *tampered[2].epsilon *= 1.01;
  EXPECT_GT(verify_sweep_rows(tampered), 1e-3);
}

TEST(Sweep, SvgDependsOnCsvOnly) {
  const std::string csv = sweep_csv(sweep_epsilon(50000, 50000, {1, 2, 3, 4}, {2.0 / 255, 32.0 / 255}, 1.0));
  const std::string a = render_epsilon_svg(parse_csv(csv));
  const std::string b = render_epsilon_svg(parse_csv(csv));
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n') > 5, true);
  EXPECT_NE(a.find("<polyline"), std::string::npos);
  EXPECT_NE(a.find("s = 32.0/255"), std::string::npos);
}

TEST(Run, DeterministicRowsAndSummary) {
  const auto cfg = ExperimentConfig::parse(std::string(kTiny) + "defense.kind = none\n");
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(sweep_csv(a.rows), sweep_csv(b.rows));
  EXPECT_EQ(summary_text(a), summary_text(b));
  EXPECT_EQ(a.rows[0].trial, 0u);
  EXPECT_EQ(a.rows[1].trial, 1u);
  EXPECT_NE(a.rows[0].seed, a.rows[1].seed);
  ASSERT_TRUE(a.rows[0].poison_success && a.rows[0].clean_accuracy);
  EXPECT_FALSE(a.rows[0].epsilon);
  EXPECT_NE(a.header.find("backdoor"), std::string::npos);
}

TEST(Run, ThreadsDoNotChangeOutput) {
  auto cfg = ExperimentConfig::parse(std::string(kTiny) + "defense.kind = none\n");
  const auto one = sweep_csv(run_experiment(cfg).rows);
  cfg.threads = 3;
  EXPECT_EQ(sweep_csv(run_experiment(cfg).rows), one);
}

TEST(Run, AddingTrialsKeepsEarlierRows) {
  auto cfg = ExperimentConfig::parse(std::string(kTiny) + "defense.kind = none\n");
  const auto two = run_experiment(cfg);
  cfg.trials = 3;
  const auto three = run_experiment(cfg);
  EXPECT_EQ(sweep_csv({two.rows[0], two.rows[1]}), sweep_csv({three.rows[0], three.rows[1]}));
}

TEST(Run, TwentyTrialsGiveTwentyRows) {
  auto cfg = ExperimentConfig::parse(std::string(kTiny) + "defense.kind = none\n");
  cfg.trials = 20;
  cfg.trainer.epochs = 1;
  const auto r = run_experiment(cfg);
  EXPECT_EQ(r.rows.size(), 20u);
  ASSERT_EQ(r.summary.size(), 1u);
  EXPECT_EQ(r.summary[0].trials, 20u);
}

TEST(Run, CertifiedReleaseAttachesCertificate) {
  const auto cfg = ExperimentConfig::parse(std::string(kTiny) +
                                           "defense.kind = certified_release\nsweep.k = 2,4\n"
                                           "sweep.sigma = 16/255\n");
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.rows.size(), 4u);
  ASSERT_TRUE(r.certificate);
  EXPECT_EQ(*r.rows[0].k, 2u);
  EXPECT_EQ(*r.rows[2].k, 4u);
  EXPECT_LT(verify_sweep_rows(r.rows), 1e-15);
  EXPECT_NE(summary_text(r).find("image channel only"), std::string::npos);
}

TEST(Run, AugmentationGridCarriesPrediction) {
  const auto cfg = ExperimentConfig::parse(std::string(kTiny) +
                                           "defense.kind = augmentation\ntrainer.augmentation = mixup\n"
                                           "sweep.k = 2\nsweep.sigma = 0,16/255\n");
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_FALSE(r.rows[0].epsilon);
  EXPECT_TRUE(r.rows[2].epsilon);
  EXPECT_EQ(r.rows[2].policy, "mixup");
  EXPECT_NE(r.header.find("gradient-matching"), std::string::npos);
}

TEST(Run, FilteringAndDpSgdPathways) {
  for (const char* d : {"spectral", "activation_clustering", "deep_knn", "dp_sgd"}) {
    const auto cfg = ExperimentConfig::parse(std::string(kTiny) + "defense.kind = " + d + "\n");
    const auto r = run_experiment(cfg);
    EXPECT_EQ(r.rows.size(), 2u);
    EXPECT_EQ(r.rows[0].policy, d);
  }
}

TEST(Run, FeatureCollisionPathway) {
  std::string text = kTiny;
  text.replace(text.find("attack.kind = backdoor"), 22, "attack.kind = feature_collision");
  const auto cfg = ExperimentConfig::parse(text + "attack.steps = 10\nattack.pretrain_epochs = 1\n");
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.rows.size(), 2u);
  const double s = *r.rows[0].poison_success;
  EXPECT_TRUE(s == 0.0 || s == 1.0);
}

TEST(Run, DivergenceBecomesTrialFailed) {
  const auto cfg = ExperimentConfig::parse(std::string(kTiny) +
                                           "defense.kind = none\ntrainer.lr_drops = 1:1e100\n");
  try {
    run_experiment(cfg);
    FAIL();
  } catch (const TrialFailed& e) {
    EXPECT_EQ(e.trial(), 0u);
  }
}

TEST(Report, WritesDeterministicFilesAndSidecar) {
  const auto cfg = ExperimentConfig::parse(std::string(kTiny) + "defense.kind = none\n");
  const auto dir = testing::scratch("report");
  write_report(dir / "a", run_experiment(cfg));
  write_report(dir / "b", run_experiment(cfg));
  EXPECT_EQ(read_text(dir / "a" / "report.csv"), read_text(dir / "b" / "report.csv"));
  EXPECT_EQ(read_text(dir / "a" / "summary.txt"), read_text(dir / "b" / "summary.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "run_meta.txt"));
}

}  // namespace
}  // namespace dpmix
