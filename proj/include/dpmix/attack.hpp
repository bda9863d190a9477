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

#pragma once

#include <cstdint>
#include <vector>

#include "dpmix/datastore.hpp"
#include "dpmix/network.hpp"

namespace dpmix {

struct BackdoorSpec {
  std::size_t patch_h = 4;
  std::size_t patch_w = 4;
  double bernoulli_p = 0.5;
  std::size_t target_class = 0;
  std::size_t victim_class = 1;
  double poison_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate(const ImageShape& shape) const;
};

/// Raw Bernoulli(p) trigger, values in {0,1}, patch_h x patch_w x channels.
ImageTensor bernoulli_patch(const BackdoorSpec& spec, std::size_t channels);

/// The trigger standardized by per-channel statistics and clipped to [0,1].
/// Default stats (mean 0, std 1) leave the raw patch unchanged.
ImageTensor gen_patch(const BackdoorSpec& spec, const ChannelStats& stats);
ImageTensor gen_patch(const BackdoorSpec& spec, std::size_t channels);

/// Overwrites the pixels under `patch` placed at (row, col).
void stamp_patch(ImageTensor& img, const ImageTensor& patch, std::size_t row, std::size_t col);

/// Stamps the trigger at independent uniform locations onto
/// ceil(fraction * |target class|) randomly chosen target-class images.
LabeledDataset apply_backdoor(const LabeledDataset& ds, const BackdoorSpec& spec,
                              const ImageTensor& patch);

/// Victim-class test images only, each carrying the trigger at a fresh location.
LabeledDataset patch_test_set(const LabeledDataset& test_ds, const BackdoorSpec& spec,
                              const ImageTensor& patch);

struct CollisionSpec {
  std::vector<std::size_t> base_indices;  // into the training set, target class
  std::size_t target_index = 0;           // into the victim pool
  std::size_t steps = 200;
  double step_size = 0.01;
  double beta = 0.1;
  double linf_budget = 16.0 / 255.0;
};

/// Clean-label feature collision. Each base is moved toward the target in
/// feature space by forward-backward splitting: a gradient step on
/// |f(x) - f(t)|^2, a proximal step on beta |x - x_b|^2, then projection onto
/// the l-inf ball around x_b and onto [0,1].
LabeledDataset craft_feature_collision(const LabeledDataset& ds, const LabeledDataset& victim_pool,
                                       const Network<double>& extractor,
                                       const CollisionSpec& spec);

}  // namespace dpmix
