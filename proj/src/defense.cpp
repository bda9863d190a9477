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

#include "dpmix/defense.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "dpmix/csv.hpp"

namespace dpmix {
namespace {

Eigen::MatrixXd centered(const Eigen::MatrixXd& m) {
  return m.rowwise() - m.colwise().mean();
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

void check_features(const LabeledDataset& ds, const Eigen::MatrixXd& features) {
  require(static_cast<std::size_t>(features.rows()) == ds.size(),
          "defense: feature rows must match dataset size");
  require(features.allFinite(), "defense: non-finite features");
}

FilterResult assemble(const LabeledDataset& ds, std::vector<FilterDecision> decisions) {
  FilterResult out{LabeledDataset{ds.name, ds.class_count, {}}, std::move(decisions)};
  for (const auto& d : out.decisions) {
    if (d.action == FilterAction::kRemove) continue;
    Example e = ds.examples[d.index];
    if (d.action == FilterAction::kRelabel) e.label = SoftLabel::one_hot(ds.class_count, d.new_label);
    out.data.examples.push_back(std::move(e));
  }
  return out;
}

std::vector<FilterDecision> keep_all(const LabeledDataset& ds) {
  std::vector<FilterDecision> d(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) d[i] = {ds.examples[i].label.hard(), i, 0.0};
  return d;
}

}  // namespace

std::size_t FilterResult::count(FilterAction a) const {
  return static_cast<std::size_t>(std::count_if(
      decisions.begin(), decisions.end(), [a](const FilterDecision& d) { return d.action == a; }));
}

Eigen::VectorXd spectral_scores(const FeatureMatrix& feats) {
  require(feats.rows.rows() >= 2, "spectral_scores: need at least 2 rows");
  require(feats.rows.allFinite(), "spectral_scores: non-finite features");
  const Eigen::MatrixXd c = centered(feats.rows);
  if (c.cwiseAbs().maxCoeff() == 0.0) return Eigen::VectorXd::Zero(c.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinV);
  const Eigen::VectorXd v = svd.matrixV().col(0);
  return (c * v).array().square().matrix();
}

FilterResult spectral_filter(const LabeledDataset& ds, const Eigen::MatrixXd& features,
                             double remove_fraction) {
  require(remove_fraction >= 0 && remove_fraction < 1,
          "spectral_filter: remove_fraction must be in [0,1)");
  check_features(ds, features);
  auto decisions = keep_all(ds);
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    const auto members = ds.indices_of_class(c);
    if (members.size() < 2) continue;
    const Eigen::VectorXd scores = spectral_scores({rows_of(features, members), c});
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const auto removed = static_cast<std::size_t>(
        std::ceil(remove_fraction * static_cast<double>(members.size()) - 1e-9));
    for (std::size_t j = 0; j < members.size(); ++j) {
      auto& d = decisions[members[j]];
      d.score = scores[static_cast<Eigen::Index>(j)];
    }
    for (std::size_t r = 0; r < removed && r < order.size(); ++r)
      decisions[members[order[r]]].action = FilterAction::kRemove;
  }
  return assemble(ds, std::move(decisions));
}

std::vector<int> two_means(const Eigen::MatrixXd& points, std::size_t max_iterations,
                           std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  require(n >= 2, "two_means: need at least 2 points");
  Rng rng = make_rng(seed);
  Eigen::MatrixXd centers(2, points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  // k-means++ second center: probability proportional to squared distance.
  Eigen::VectorXd d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  const double total = d2.sum();
  Eigen::Index second = 0;
  if (total > 0) {
    double u = uniform_open01(rng) * total;
    for (second = 0; second < n - 1; ++second) {
      u -= d2[second];
      if (u <= 0) break;
    }
  }
  centers.row(1) = points.row(second);

  std::vector<int> label(static_cast<std::size_t>(n), -1);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = (points.row(i) - centers.row(0)).squaredNorm();
      const double b = (points.row(i) - centers.row(1)).squaredNorm();
      const int l = b < a ? 1 : 0;
      if (label[static_cast<std::size_t>(i)] != l) {
        label[static_cast<std::size_t>(i)] = l;
        changed = true;
      }
    }
    if (!changed) break;
    for (int c = 0; c < 2; ++c) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(points.cols());
      Eigen::Index count = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (label[static_cast<std::size_t>(i)] == c) {
          sum += points.row(i);
          ++count;
        }
      if (count > 0) centers.row(c) = sum / static_cast<double>(count);
    }
  }
  return label;
}

double mean_silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  const Eigen::Index n = points.rows();
  std::array<double, 2> sizes{0, 0};
  for (int l : labels) sizes[static_cast<std::size_t>(l)] += 1;
  if (sizes[0] == 0 || sizes[1] == 0) return 0.0;
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::array<double, 2> sum{0, 0};
    for (Eigen::Index j = 0; j < n; ++j)
      sum[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += (points.row(i) - points.row(j)).norm();
    const auto own = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    if (sizes[own] < 2) continue;  // singleton: silhouette 0
    const double a = sum[own] / (sizes[own] - 1);
    const double b = sum[1 - own] / sizes[1 - own];
    const double m = std::max(a, b);
    if (m > 0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

FilterResult activation_cluster_filter(const LabeledDataset& ds, const Eigen::MatrixXd& features,
                                       const ActivationClusterConfig& cfg) {
  require(cfg.components >= 1, "activation clustering: components must be >= 1");
  check_features(ds, features);
  auto decisions = keep_all(ds);
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    const auto members = ds.indices_of_class(c);
    if (members.empty()) continue;
    require(members.size() >= 2, "activation clustering: each class needs at least 2 examples");
    const Eigen::MatrixXd x = centered(rows_of(features, members));
    Eigen::MatrixXd projected;
    if (x.cwiseAbs().maxCoeff() == 0.0) {
      projected = Eigen::MatrixXd::Zero(x.rows(), 1);
    } else {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
      const Eigen::Index r = std::min<Eigen::Index>(static_cast<Eigen::Index>(cfg.components),
                                                    svd.matrixV().cols());
      projected = x * svd.matrixV().leftCols(r);
    }
    const auto labels = two_means(projected, cfg.max_iterations, derive_seed(cfg.seed, "ac", c));
    const auto ones = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t zeros = members.size() - ones;
    const int small = ones < zeros ? 1 : 0;
    const std::size_t small_size = std::min(ones, zeros);
    const bool remove =
        ones != zeros && mean_silhouette(projected, labels) >= cfg.min_silhouette &&
        static_cast<double>(small_size) <= cfg.small_cluster_fraction * static_cast<double>(members.size());
    for (std::size_t j = 0; j < members.size(); ++j) {
      auto& d = decisions[members[j]];
      d.score = labels[j] == small ? 1.0 : 0.0;
      if (remove && labels[j] == small) d.action = FilterAction::kRemove;
    }
  }
  return assemble(ds, std::move(decisions));
}

FilterResult deep_knn_relabel(const LabeledDataset& ds, const Eigen::MatrixXd& features,
                              std::size_t K) {
  check_features(ds, features);
  require(K >= 1 && K < ds.size(), "deep_knn: need 1 <= K < n");
  auto decisions = keep_all(ds);
  const auto n = static_cast<Eigen::Index>(ds.size());
  std::vector<std::size_t> order;
  std::vector<double> dist(ds.size());
  std::vector<std::size_t> votes(ds.class_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      dist[static_cast<std::size_t>(j)] = (features.row(i) - features.row(j)).squaredNorm();
    order.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) order.push_back(static_cast<std::size_t>(j));
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(K), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
                      });
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t r = 0; r < K; ++r) ++votes[ds.examples[order[r]].label.hard()];
    const auto top = std::max_element(votes.begin(), votes.end());
    const auto winners = std::count(votes.begin(), votes.end(), *top);
    const auto plurality = static_cast<std::size_t>(top - votes.begin());
    auto& d = decisions[static_cast<std::size_t>(i)];
    d.score = static_cast<double>(*top) / static_cast<double>(K);
    if (winners == 1 && plurality != d.cls) {
      d.action = FilterAction::kRelabel;
      d.new_label = plurality;
    }
  }
  return assemble(ds, std::move(decisions));
}

std::string filter_report_csv(const FilterResult& result) {
  std::string out = "class,index,score,action\n";
  for (const auto& d : result.decisions) {
    std::string action = d.action == FilterAction::kKeep     ? "keep"
                         : d.action == FilterAction::kRemove ? "remove"
                                                             : "relabel:" + std::to_string(d.new_label);
    out += join_csv({format_count(d.cls), format_count(d.index), format_real(d.score), action}) + "\n";
  }
  return out;
}

}  // namespace dpmix
