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
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpmix/datastore.hpp"
#include "dpmix/network.hpp"

namespace dpmix {

enum class AugmentationKind { kNone, kMixup, kCutMix, kCutout, kMaxUp };

std::string to_string(AugmentationKind kind);
AugmentationKind parse_augmentation(const std::string& name);

struct AugmentationPolicy {
  AugmentationKind kind = AugmentationKind::kNone;
  std::size_t mixup_k = 2;
  double cutmix_prob = 0.5;
  std::size_t cutout_size = 0;  // square side; 0 means half the image side
  std::size_t maxup_candidates = 4;
  std::size_t maxup_warmup_epochs = 5;
  double input_noise_sigma = 0.0;  // Laplace scale added after augmentation
  bool horizontal_flip = false;
  std::size_t crop_padding = 0;  // random crop after zero padding; 0 disables
};

struct DpSgdConfig {
  double clip_norm = 1.0;
  double gauss_noise = 0.0;  // absolute per-coordinate std
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<std::pair<std::size_t, double>> lr_drops;  // (epoch, factor)
  AugmentationPolicy policy;
  std::optional<DpSgdConfig> dp_sgd;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0;
  double train_acc = 0;
  std::optional<double> test_acc;
};

struct Model {
  ModelSpec spec;
  Network<double> net;
  std::vector<EpochLog> log;

  explicit Model(ModelSpec s) : spec(s), net(std::move(s)) {}
};

struct StepInfo {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global minibatch index
  double loss = 0;
  double raw_grad_norm = 0;
  double clipped_grad_norm = 0;  // equals raw_grad_norm without DP-SGD
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  const LabeledDataset* eval = nullptr;  // fills EpochLog::test_acc
};

/// Mean soft cross-entropy over `batch` and its parameter gradient (no
/// weight decay). Used by the trainer and by gradient checks.
template <typename Scalar>
Scalar batch_loss_and_gradient(const Network<Scalar>& net, std::span<const LabeledImage> batch,
                               typename Network<Scalar>::Vector& grad);

Model train(const LabeledDataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
            const TrainHooks& hooks = {});

struct Prediction {
  std::size_t label = 0;
  Eigen::VectorXd logits;
};

/// argmax of the logits, ties to the lowest class index.
Prediction predict(const Model& model, const ImageTensor& img);
double clean_accuracy(const Model& model, const LabeledDataset& test);
double poison_success(const Model& model, const LabeledDataset& patched_victims,
                      std::size_t target_class);

/// Penultimate-layer features, one row per example.
Eigen::MatrixXd extract_features(const Model& model, const LabeledDataset& ds);

// Checkpoint: "DPMC", u32 version, u32 architecture, u32 H, W, C, m,
// u32 hidden count, u32 hidden[], u64 parameter count, f32 parameters[].
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

/// CSV with columns epoch,loss,train_acc,test_acc.
std::string training_log_csv(const Model& model);

}  // namespace dpmix
