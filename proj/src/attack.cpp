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

#include "dpmix/attack.hpp"

#include <cmath>

#include "dpmix/augment.hpp"

namespace dpmix {

void BackdoorSpec::validate(const ImageShape& shape) const {
  require(target_class != victim_class, "backdoor: target and victim class must differ");
  require(patch_h >= 1 && patch_w >= 1, "backdoor: empty patch");
  require(patch_h <= shape.height && patch_w <= shape.width, "backdoor: patch does not fit");
  require(bernoulli_p >= 0 && bernoulli_p <= 1, "backdoor: bernoulli_p must be in [0,1]");
  require(poison_fraction > 0 && poison_fraction <= 1, "backdoor: poison_fraction must be in (0,1]");
}

ImageTensor bernoulli_patch(const BackdoorSpec& spec, std::size_t channels) {
  Rng rng = make_rng(derive_seed(spec.seed, "patch"));
  ImageTensor patch = ImageTensor::zeros({spec.patch_h, spec.patch_w, channels});
  for (Eigen::Index i = 0; i < patch.pixels.size(); ++i)
    patch.pixels[i] = uniform_open01(rng) < spec.bernoulli_p ? 1.0 : 0.0;
  return patch;
}

ImageTensor gen_patch(const BackdoorSpec& spec, const ChannelStats& stats) {
  const std::size_t channels = stats.mean.size();
  require(channels >= 1 && stats.stddev.size() == channels, "gen_patch: bad channel stats");
  ImageTensor patch = bernoulli_patch(spec, channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double sd = stats.stddev[c] > 0 ? stats.stddev[c] : 1.0;
    for (std::size_t r = 0; r < spec.patch_h; ++r)
      for (std::size_t q = 0; q < spec.patch_w; ++q) {
        double& v = patch.at(c, r, q);
        v = std::clamp((v - stats.mean[c]) / sd, 0.0, 1.0);
      }
  }
  return patch;
}

ImageTensor gen_patch(const BackdoorSpec& spec, std::size_t channels) {
  return gen_patch(spec, ChannelStats{std::vector<double>(channels, 0.0),
                                      std::vector<double>(channels, 1.0)});
}

void stamp_patch(ImageTensor& img, const ImageTensor& patch, std::size_t row, std::size_t col) {
  require(patch.shape.channels == img.shape.channels, "stamp_patch: channel mismatch");
  require(row + patch.shape.height <= img.shape.height && col + patch.shape.width <= img.shape.width,
          "stamp_patch: patch does not fit");
  for (std::size_t c = 0; c < img.shape.channels; ++c)
    for (std::size_t r = 0; r < patch.shape.height; ++r)
      for (std::size_t q = 0; q < patch.shape.width; ++q)
        img.at(c, row + r, col + q) = patch.at(c, r, q);
}

LabeledDataset apply_backdoor(const LabeledDataset& ds, const BackdoorSpec& spec,
                              const ImageTensor& patch) {
  require(!ds.empty(), "apply_backdoor: empty dataset");
  spec.validate(ds.shape());
  auto members = ds.indices_of_class(spec.target_class);
  require(!members.empty(), "apply_backdoor: target class has no examples");
  const auto count = static_cast<std::size_t>(
      std::ceil(spec.poison_fraction * static_cast<double>(members.size()) - 1e-9));

  Rng pick = make_rng(derive_seed(spec.seed, "backdoor-pick"));
  std::shuffle(members.begin(), members.end(), pick);
  members.resize(count);
  std::sort(members.begin(), members.end());

  LabeledDataset out = ds;
  const PatchSpec where{patch.shape.height, patch.shape.width, std::nullopt};
  for (std::size_t i : members) {
    Rng rng = make_rng(derive_seed(spec.seed, "backdoor-train", i));
    const PatchLocation at = place_patch(ds.shape(), where, rng);
    stamp_patch(out.examples[i].image, patch, at.row, at.col);
    out.examples[i].poisoned = true;
  }
  return out;
}

LabeledDataset patch_test_set(const LabeledDataset& test_ds, const BackdoorSpec& spec,
                              const ImageTensor& patch) {
  require(!test_ds.empty(), "patch_test_set: empty test set");
  spec.validate(test_ds.shape());
  const auto members = test_ds.indices_of_class(spec.victim_class);
  require(!members.empty(), "patch_test_set: victim class has no test examples");
  LabeledDataset out{test_ds.name + ".patched", test_ds.class_count, {}};
  const PatchSpec where{patch.shape.height, patch.shape.width, std::nullopt};
  for (std::size_t i : members) {
    Example e = test_ds.examples[i];
    Rng rng = make_rng(derive_seed(spec.seed, "backdoor-test", i));
    const PatchLocation at = place_patch(e.image.shape, where, rng);
    stamp_patch(e.image, patch, at.row, at.col);
    e.poisoned = true;
    out.examples.push_back(std::move(e));
  }
  return out;
}

LabeledDataset craft_feature_collision(const LabeledDataset& ds, const LabeledDataset& victim_pool,
                                       const Network<double>& extractor,
                                       const CollisionSpec& spec) {
  require(spec.linf_budget > 0, "feature collision: budget must be > 0");
  require(spec.step_size > 0, "feature collision: step size must be > 0");
  require(spec.beta >= 0, "feature collision: beta must be >= 0");
  require(spec.target_index < victim_pool.size(), "feature collision: target index out of range");
  const Eigen::VectorXd target_feat =
      extractor.features(victim_pool.examples[spec.target_index].image.pixels);

  LabeledDataset out = ds;
  Network<double>::Trace trace;
  for (std::size_t b : spec.base_indices) {
    require(b < ds.size(), "feature collision: base index out of range");
    const Eigen::VectorXd base = ds.examples[b].image.pixels;
    Eigen::VectorXd x = base;
    const double shrink = 1.0 / (1.0 + 2.0 * spec.step_size * spec.beta);
    for (std::size_t it = 0; it < spec.steps; ++it) {
      extractor.forward(x, trace);
      const Eigen::VectorXd diff = extractor.features(trace) - target_feat;
      const double loss = diff.squaredNorm() + spec.beta * (x - base).squaredNorm();
      if (!std::isfinite(loss))
        throw Error("feature collision: non-finite loss at step " + std::to_string(it));
      Eigen::VectorXd dx;
      extractor.backward_features(trace, 2.0 * diff, nullptr, &dx);
      x -= spec.step_size * dx;
      // Proximal step for beta |x - base|^2.
      x = (x + 2.0 * spec.step_size * spec.beta * base) * shrink;
      x = x.array().max(base.array() - spec.linf_budget).min(base.array() + spec.linf_budget).matrix();
      x = x.cwiseMax(0.0).cwiseMin(1.0);
    }
    out.examples[b].image.pixels = x;
    out.examples[b].poisoned = true;
  }
  return out;
}

}  // namespace dpmix
