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

#include "dpmix/defense.hpp"
#include "test_util.hpp"

namespace dpmix {
namespace {

TEST(Spectral, ScoresAreSquaredTopProjections) {
  Eigen::MatrixXd m(4, 2);
  m << 1, 0, -1, 0, 3, 0, -3, 0;
  const Eigen::VectorXd s = spectral_scores({m, 0});
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  EXPECT_NEAR(s[2], 9.0, 1e-12);
  EXPECT_EQ(spectral_scores({Eigen::MatrixXd::Zero(3, 2), 0}), Eigen::VectorXd::Zero(3));
}

TEST(Spectral, RemovesPlantedOutliers) {
  const auto fx = testing::planted_features(2, 90, 10, 16, 8.0, 5);
  const auto r = spectral_filter(fx.data, fx.features, 0.15);
  std::size_t caught = 0, removed = 0;
  for (const auto& d : r.decisions) {
    if (d.action != FilterAction::kRemove) continue;
    ++removed;
    caught += fx.planted[d.index];
  }
  EXPECT_EQ(removed, 30u);
  EXPECT_GE(caught, 18u);
  EXPECT_EQ(r.data.size(), 170u);
  EXPECT_EQ(r.count(FilterAction::kRemove), 30u);
}

TEST(Spectral, ZeroFractionKeepsAll) {
  const auto fx = testing::planted_features(1, 20, 2, 4, 8.0, 5);
  EXPECT_EQ(spectral_filter(fx.data, fx.features, 0.0).data.size(), 22u);
  EXPECT_THROW(spectral_filter(fx.data, fx.features, 1.0), InvalidArgument);
  EXPECT_THROW(spectral_filter(fx.data, fx.features.topRows(5), 0.1), InvalidArgument);
}

TEST(TwoMeans, SeparatesTwoClumps) {
  Eigen::MatrixXd p(6, 1);
  p << 0.0, 0.1, 0.2, 10.0, 10.1, 10.2;
  const auto l = two_means(p, 50, 1);
  EXPECT_EQ(l[0], l[1]);
  EXPECT_EQ(l[1], l[2]);
  EXPECT_EQ(l[3], l[4]);
  EXPECT_NE(l[0], l[3]);
}

TEST(ActivationClustering, RemovesSmallPlantedCluster) {
  const auto fx = testing::planted_features(2, 90, 10, 16, 12.0, 6);
  const auto r = activation_cluster_filter(fx.data, fx.features);
  for (const auto& d : r.decisions)
    EXPECT_EQ(d.action == FilterAction::kRemove, static_cast<bool>(fx.planted[d.index])) << d.index;
}

TEST(ActivationClustering, KeepsSingleBlobClass) {
  const auto fx = testing::planted_features(3, 100, 0, 16, 0.0, 7);
  const auto r = activation_cluster_filter(fx.data, fx.features);
  EXPECT_EQ(r.count(FilterAction::kRemove), 0u);
  EXPECT_EQ(r.data.size(), 300u);
}

TEST(DeepKnn, RelabelsOnlyThePlantedMislabel) {
  auto fx = testing::planted_features(3, 40, 0, 8, 0.0, 8);
  fx.data.examples[5].label = SoftLabel::one_hot(3, 2);  // a class-0 point labeled 2
  const auto r = deep_knn_relabel(fx.data, fx.features, 5);
  ASSERT_EQ(r.count(FilterAction::kRelabel), 1u);
  for (const auto& d : r.decisions) {
    if (d.index == 5) {
      EXPECT_EQ(d.action, FilterAction::kRelabel);
      EXPECT_EQ(d.new_label, 0u);
    } else {
      EXPECT_EQ(d.action, FilterAction::kKeep);
    }
  }
  EXPECT_EQ(r.data.examples[5].label.hard(), 0u);
  EXPECT_THROW(deep_knn_relabel(fx.data, fx.features, 0), InvalidArgument);
}

TEST(DeepKnn, TiesKeepTheLabel) {
  LabeledDataset ds{"t", 3, {}};
  Eigen::MatrixXd f(3, 1);
  f << 0.0, 1.0, -1.0;
  for (std::size_t c : {0u, 1u, 2u})
    ds.examples.push_back({ImageTensor({1, 1, 1}, Eigen::VectorXd::Zero(1)), SoftLabel::one_hot(3, c), false});
  const auto r = deep_knn_relabel(ds, f, 2);
  EXPECT_EQ(r.count(FilterAction::kRelabel), 0u);
}

TEST(Report, CsvColumns) {
  const auto fx = testing::planted_features(1, 4, 1, 2, 50.0, 1);
  const auto r = spectral_filter(fx.data, fx.features, 0.2);
  const std::string csv = filter_report_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "class,index,score,action");
  EXPECT_NE(csv.find(",remove\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(ActivationClustering, SilhouetteSeparatesBlobsFromOne) {
  Eigen::MatrixXd two(6, 1);
  two << 0, 0.1, 0.2, 10, 10.1, 10.2;
  EXPECT_GT(mean_silhouette(two, {0, 0, 0, 1, 1, 1}), 0.9);
  EXPECT_LT(mean_silhouette(two, {0, 1, 0, 1, 0, 1}), 0.0);
  EXPECT_EQ(mean_silhouette(two, {0, 0, 0, 0, 0, 0}), 0.0);
}

}  // namespace
}  // namespace dpmix
