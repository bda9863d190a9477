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

// Feature-space filtering defenses. All of them take a feature matrix with
// one row per dataset example (same order) and never touch pixels.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dpmix/datastore.hpp"

namespace dpmix {

struct FeatureMatrix {
  Eigen::MatrixXd rows;
  std::size_t owner_class = 0;
};

enum class FilterAction { kKeep, kRemove, kRelabel };

struct FilterDecision {
  std::size_t cls = 0;
  std::size_t index = 0;  // position in the input dataset
  double score = 0;
  FilterAction action = FilterAction::kKeep;
  std::size_t new_label = 0;  // kRelabel only
};

struct FilterResult {
  LabeledDataset data;
  std::vector<FilterDecision> decisions;  // one per input example, input order

  std::size_t count(FilterAction a) const;
};

/// Squared projection of each centered row onto the top right singular
/// vector of the centered matrix, in input order.
Eigen::VectorXd spectral_scores(const FeatureMatrix& feats);

/// Per class, drops the ceil(fraction * n_class) highest-scoring examples.
FilterResult spectral_filter(const LabeledDataset& ds, const Eigen::MatrixXd& features,
                             double remove_fraction);

struct ActivationClusterConfig {
  std::size_t components = 10;
  double small_cluster_fraction = 0.35;
  double min_silhouette = 0.25;  // mean silhouette below this reads as one blob
  std::size_t max_iterations = 100;
  std::uint64_t seed = 0;
};

/// Two-means labels (0/1) of the rows, k-means++ seeding.
std::vector<int> two_means(const Eigen::MatrixXd& points, std::size_t max_iterations,
                           std::uint64_t seed);

/// Mean silhouette of a two-way labelling (labels 0/1), Euclidean distance.
double mean_silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels);

FilterResult activation_cluster_filter(const LabeledDataset& ds, const Eigen::MatrixXd& features,
                                       const ActivationClusterConfig& cfg = {});

/// Relabels each example to the strict plurality hard label of its K nearest
/// neighbors (Euclidean, itself excluded, distance ties to the lower index).
FilterResult deep_knn_relabel(const LabeledDataset& ds, const Eigen::MatrixXd& features,
                              std::size_t K);

/// CSV with columns class,index,score,action.
std::string filter_report_csv(const FilterResult& result);

}  // namespace dpmix
