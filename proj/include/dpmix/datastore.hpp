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

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dpmix/core.hpp"

namespace dpmix {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Channel-planar image: pixel (c, row, col) lives at c*H*W + row*W + col.
struct ImageTensor {
  ImageShape shape;
  Eigen::VectorXd pixels;

  ImageTensor() = default;
  ImageTensor(ImageShape s, Eigen::VectorXd p);
  static ImageTensor zeros(ImageShape s);

  std::size_t index(std::size_t c, std::size_t row, std::size_t col) const {
    return (c * shape.height + row) * shape.width + col;
  }
  double& at(std::size_t c, std::size_t row, std::size_t col) {
    return pixels[static_cast<Eigen::Index>(index(c, row, col))];
  }
  double at(std::size_t c, std::size_t row, std::size_t col) const {
    return pixels[static_cast<Eigen::Index>(index(c, row, col))];
  }
};

/// A point on the probability simplex over m classes.
struct SoftLabel {
  Eigen::VectorXd probs;

  static SoftLabel one_hot(std::size_t classes, std::size_t index);
  std::size_t classes() const { return static_cast<std::size_t>(probs.size()); }
  /// argmax, ties to the lowest class index.
  std::size_t hard() const;
  bool on_simplex(double tol = 1e-9) const;
};

struct LabeledImage {
  ImageTensor image;
  SoftLabel label;
};

struct Example {
  ImageTensor image;
  SoftLabel label;
  bool poisoned = false;
};

struct LabeledDataset {
  std::string name;
  std::size_t class_count = 0;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  const ImageShape& shape() const { return examples.front().image.shape; }
  std::vector<std::size_t> indices_of_class(std::size_t c) const;
  /// Throws InvalidArgument unless shapes, label widths and value ranges agree.
  void validate(bool require_unit_range = true) const;
};

/// Assumed l1 diameter of the data domain.
struct DiameterModel {
  double delta = 1.0;
};

// ---- ingestion -------------------------------------------------------------

LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path);
LabeledDataset load_cifar_binary(const std::filesystem::path& path);

struct BlobSpec {
  std::size_t classes = 3;
  std::size_t per_class = 200;
  ImageShape shape{8, 8, 1};
  double separation = 0.5;
  double noise = 0.15;
  std::uint64_t seed = 0;
};

/// Gaussian blobs around class templates, clipped to [0,1]. Templates are
/// 0.5 + separation * u_c with u_c uniform in [-1/2, 1/2]^d.
LabeledDataset synth_blobs(const BlobSpec& spec);

struct RescaledDataset {
  LabeledDataset data;
  double scale = 1.0;  // pixel multiplier applied; divide to restore
};

/// Scales [0,1]^d onto a cube of l1 diameter target.delta (factor delta/d).
RescaledDataset rescale_to_diameter(const LabeledDataset& ds, DiameterModel target);
LabeledDataset restore_from_diameter(const RescaledDataset& rescaled);

/// Stratified split. Class c is shuffled with a sub-seed derived from
/// (seed, c), then its first round(fraction * n_c) members go to train.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double train_fraction,
                                                std::uint64_t seed);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};
ChannelStats channel_stats(const LabeledDataset& ds);

// ---- container format ------------------------------------------------------
//
// Little-endian. Header: "DPMX", u32 version, u32 kind (0 dataset, 1
// release), u32 H, u32 W, u32 C, u32 m, u64 n, u32 name length, name bytes.
// A release appends its certificate block (see privacy.hpp). Records follow:
// f32 pixels[d], f32 label[m], u8 poisoned.

struct CertificateBlock {
  std::uint64_t n = 0, T = 0, k = 0;
  double sigma = 0, delta = 0, branch_a = 0, branch_b = 0, epsilon = 0,
         upper_bound = 0, dp_delta = 0;
};

void write_container(std::ostream& out, const LabeledDataset& ds,
                     const std::optional<CertificateBlock>& certificate = std::nullopt);
void write_container(const std::filesystem::path& path, const LabeledDataset& ds,
                     const std::optional<CertificateBlock>& certificate = std::nullopt);

struct ContainerContents {
  LabeledDataset data;
  std::optional<CertificateBlock> certificate;
};
ContainerContents read_container(std::istream& in);
ContainerContents read_container(const std::filesystem::path& path);

}  // namespace dpmix
