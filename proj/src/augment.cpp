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

#include "dpmix/augment.hpp"

#include <cmath>
#include <numeric>

namespace dpmix {

PatchLocation place_patch(const ImageShape& shape, const PatchSpec& patch, Rng& rng) {
  require(patch.height <= shape.height && patch.width <= shape.width,
          "patch does not fit inside the image");
  if (patch.location) {
    require(patch.location->row + patch.height <= shape.height &&
                patch.location->col + patch.width <= shape.width,
            "patch does not fit inside the image at the requested location");
    return *patch.location;
  }
  return {uniform_index(rng, shape.height - patch.height + 1),
          uniform_index(rng, shape.width - patch.width + 1)};
}

LabeledImage mix_equal(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  require(!indices.empty(), "mix_equal: no indices");
  const auto& first = ds.examples.at(indices.front());
  LabeledImage out{first.image, first.label};
  if (indices.size() == 1) return out;
  for (std::size_t i = 1; i < indices.size(); ++i) {
    const auto& e = ds.examples.at(indices[i]);
    require(e.image.shape == out.image.shape, "mix_equal: shape mismatch");
    out.image.pixels += e.image.pixels;
    out.label.probs += e.label.probs;
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  out.image.pixels *= inv;
  out.label.probs *= inv;
  return out;
}

std::vector<std::size_t> draw_mixture(std::size_t n, const MixSpec& spec, Rng& rng) {
  require(spec.k >= 1, "mixup: k must be >= 1");
  require(n >= 1, "mixup: empty dataset");
  std::vector<std::size_t> out(spec.k);
  if (spec.with_replacement) {
    for (auto& i : out) i = uniform_index(rng, n);
    return out;
  }
  require(spec.k <= n, "mixup: k exceeds n when sampling without replacement");
  // Partial Fisher-Yates over a virtual identity permutation.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t j = 0; j < spec.k; ++j) {
    const std::size_t r = j + uniform_index(rng, n - j);
    std::swap(perm[j], perm[r]);
    out[j] = perm[j];
  }
  return out;
}

LabeledImage mixup_k(const LabeledDataset& ds, const MixSpec& spec, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const auto idx = draw_mixture(ds.size(), spec, rng);
  return mix_equal(ds, idx);
}

ImageTensor cutout(const ImageTensor& img, const PatchSpec& patch, Rng& rng) {
  const PatchLocation at = place_patch(img.shape, patch, rng);
  ImageTensor out = img;
  for (std::size_t c = 0; c < img.shape.channels; ++c)
    for (std::size_t r = 0; r < patch.height; ++r)
      for (std::size_t q = 0; q < patch.width; ++q) out.at(c, at.row + r, at.col + q) = 0.0;
  return out;
}

ImageTensor cutout(const ImageTensor& img, const PatchSpec& patch, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return cutout(img, patch, rng);
}

LabeledImage cutmix(const LabeledImage& a, const LabeledImage& b, const PatchSpec& patch,
                    Rng& rng) {
  require(a.image.shape == b.image.shape, "cutmix: image shape mismatch");
  require(a.label.classes() == b.label.classes(), "cutmix: label width mismatch");
  const PatchLocation at = place_patch(a.image.shape, patch, rng);
  LabeledImage out = a;
  for (std::size_t c = 0; c < a.image.shape.channels; ++c)
    for (std::size_t r = 0; r < patch.height; ++r)
      for (std::size_t q = 0; q < patch.width; ++q)
        out.image.at(c, at.row + r, at.col + q) = b.image.at(c, at.row + r, at.col + q);
  const double area = static_cast<double>(patch.height * patch.width);
  const double rho = area / static_cast<double>(a.image.shape.height * a.image.shape.width);
  out.label.probs = (1.0 - rho) * a.label.probs + rho * b.label.probs;
  return out;
}

LabeledImage cutmix(const LabeledImage& a, const LabeledImage& b, const PatchSpec& patch,
                    std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return cutmix(a, b, patch, rng);
}

std::size_t maxup_select(std::span<const double> losses) {
  require(!losses.empty(), "maxup_select: empty loss sequence");
  std::size_t best = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    require(std::isfinite(losses[i]), "maxup_select: non-finite loss");
    if (losses[i] > losses[best]) best = i;
  }
  return best;
}

}  // namespace dpmix
