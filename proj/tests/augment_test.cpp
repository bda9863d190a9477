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

#include <map>
#include <set>

#include "dpmix/augment.hpp"

namespace dpmix {
namespace {

LabeledDataset ramp(std::size_t n, std::size_t classes = 3) {
  LabeledDataset ds{"ramp", classes, {}};
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(16, static_cast<double>(i) / static_cast<double>(n));
    ds.examples.push_back({ImageTensor({4, 4, 1}, p), SoftLabel::one_hot(classes, i % classes), false});
  }
  return ds;
}

TEST(Mixup, EqualWeightsOnImagesAndLabels) {
  const auto ds = ramp(6);
  const std::vector<std::size_t> idx = {0, 1, 5};
  const auto m = mix_equal(ds, idx);
  EXPECT_NEAR(m.image.pixels[0], (0.0 + 1.0 / 6 + 5.0 / 6) / 3, 1e-15);
  EXPECT_NEAR(m.label.probs[0], 1.0 / 3, 1e-15);
  EXPECT_NEAR(m.label.probs[1], 1.0 / 3, 1e-15);
  EXPECT_NEAR(m.label.probs[2], 1.0 / 3, 1e-15);
  EXPECT_TRUE(m.label.on_simplex());
}

TEST(Mixup, KOneIsIdentity) {
  const auto ds = ramp(5);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto m = mixup_k(ds, {1, false}, s);
    bool found = false;
    for (const auto& e : ds.examples) found |= e.image.pixels == m.image.pixels && e.label.probs == m.label.probs;
    EXPECT_TRUE(found);
  }
}

TEST(Mixup, WithoutReplacementDrawsDistinctUniformSubsets) {
  Rng rng = make_rng(3);
  std::map<std::set<std::size_t>, int> counts;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) {
    const auto idx = draw_mixture(4, {2, false}, rng);
    ASSERT_NE(idx[0], idx[1]);
    counts[{idx.begin(), idx.end()}]++;
  }
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [s, c] : counts) EXPECT_NEAR(c / double(draws), 1.0 / 6, 0.01);
}

TEST(Mixup, PreconditionsAndReplacement) {
  Rng rng = make_rng(0);
  EXPECT_THROW(draw_mixture(3, {4, false}, rng), InvalidArgument);
  EXPECT_THROW(draw_mixture(3, {0, false}, rng), InvalidArgument);
  EXPECT_EQ(draw_mixture(3, {4, true}, rng).size(), 4u);
}

TEST(Mixup, SeedDeterminism) {
  const auto ds = ramp(10);
  EXPECT_EQ(mixup_k(ds, {3, false}, 8).image.pixels, mixup_k(ds, {3, false}, 8).image.pixels);
}

TEST(Cutout, ZeroesExactlyThePatch) {
  ImageTensor img({6, 6, 2}, Eigen::VectorXd::Ones(72));
  const auto out = cutout(img, {2, 3, PatchLocation{1, 2}}, 0);
  EXPECT_DOUBLE_EQ(out.pixels.sum(), 72.0 - 12.0);
  EXPECT_EQ(out.at(1, 2, 4), 0.0);
  EXPECT_EQ(out.at(0, 0, 0), 1.0);
  EXPECT_THROW(cutout(img, {7, 1, std::nullopt}, 0), InvalidArgument);
  EXPECT_THROW(cutout(img, {2, 2, PatchLocation{5, 0}}, 0), InvalidArgument);
}

TEST(Cutout, RandomLocationStaysInside) {
  ImageTensor img({5, 7, 1}, Eigen::VectorXd::Ones(35));
  for (std::uint64_t s = 0; s < 200; ++s)
    EXPECT_DOUBLE_EQ(cutout(img, {3, 4, std::nullopt}, s).pixels.sum(), 35.0 - 12.0);
}

TEST(CutMix, LabelWeightIsAreaFraction) {
  LabeledImage a{ImageTensor({4, 4, 1}, Eigen::VectorXd::Zero(16)), SoftLabel::one_hot(2, 0)};
  LabeledImage b{ImageTensor({4, 4, 1}, Eigen::VectorXd::Ones(16)), SoftLabel::one_hot(2, 1)};
  const auto m = cutmix(a, b, {2, 2, std::nullopt}, 4);
  EXPECT_DOUBLE_EQ(m.image.pixels.sum(), 4.0);
  EXPECT_DOUBLE_EQ(m.label.probs[1], 0.25);
  EXPECT_DOUBLE_EQ(m.label.probs[0], 0.75);
  EXPECT_TRUE(m.label.on_simplex());
}

TEST(MaxUp, PicksWorstCaseLowestIndexOnTies) {
  const std::vector<double> losses = {0.3, 1.2, 1.2, 0.9};
  EXPECT_EQ(maxup_select(losses), 1u);
  const std::vector<double> one = {5.0};
  EXPECT_EQ(maxup_select(one), 0u);
  EXPECT_THROW(maxup_select(std::span<const double>()), InvalidArgument);
  const std::vector<double> bad = {0.1, std::nan("")};
  EXPECT_THROW(maxup_select(bad), InvalidArgument);
}

}  // namespace
}  // namespace dpmix
