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
#include <optional>
#include <span>
#include <vector>

#include "dpmix/datastore.hpp"

namespace dpmix {

struct MixSpec {
  std::size_t k = 2;
  bool with_replacement = false;
};

struct PatchLocation {
  std::size_t row = 0;
  std::size_t col = 0;
};

struct PatchSpec {
  std::size_t height = 0;
  std::size_t width = 0;
  std::optional<PatchLocation> location;  // nullopt: uniform over valid positions
};

/// Resolves a patch position, drawing from rng when the location is random.
PatchLocation place_patch(const ImageShape& shape, const PatchSpec& patch, Rng& rng);

/// Equal-weight average of the listed examples (images and labels).
LabeledImage mix_equal(const LabeledDataset& ds, std::span<const std::size_t> indices);

/// Draws k indices from [0, n): a uniform k-subset, or a k-tuple with replacement.
std::vector<std::size_t> draw_mixture(std::size_t n, const MixSpec& spec, Rng& rng);

LabeledImage mixup_k(const LabeledDataset& ds, const MixSpec& spec, std::uint64_t seed);

ImageTensor cutout(const ImageTensor& img, const PatchSpec& patch, std::uint64_t seed);
ImageTensor cutout(const ImageTensor& img, const PatchSpec& patch, Rng& rng);

/// Pastes b's content under the patch onto a; label weight of b is the area
/// fraction of the patch.
LabeledImage cutmix(const LabeledImage& a, const LabeledImage& b, const PatchSpec& patch,
                    std::uint64_t seed);
LabeledImage cutmix(const LabeledImage& a, const LabeledImage& b, const PatchSpec& patch,
                    Rng& rng);

/// Index of the worst-case (largest) loss, ties to the lowest index.
std::size_t maxup_select(std::span<const double> losses);

}  // namespace dpmix
