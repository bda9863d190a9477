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

#include "dpmix/trainer.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "dpmix/augment.hpp"
#include "dpmix/csv.hpp"
#include "dpmix/privacy.hpp"

namespace dpmix {

std::string to_string(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::kNone: return "none";
    case AugmentationKind::kMixup: return "mixup";
    case AugmentationKind::kCutMix: return "cutmix";
    case AugmentationKind::kCutout: return "cutout";
    case AugmentationKind::kMaxUp: return "maxup";
  }
  return "none";
}

AugmentationKind parse_augmentation(const std::string& name) {
  for (auto k : {AugmentationKind::kNone, AugmentationKind::kMixup, AugmentationKind::kCutMix,
                 AugmentationKind::kCutout, AugmentationKind::kMaxUp})
    if (to_string(k) == name) return k;
  throw InvalidArgument("unknown augmentation policy '" + name + "'");
}

void TrainConfig::validate() const {
  require(lr >= 0 && std::isfinite(lr), "trainer: lr must be finite and >= 0");
  require(batch >= 1, "trainer: batch must be >= 1");
  require(momentum >= 0 && momentum < 1, "trainer: momentum must be in [0,1)");
  require(weight_decay >= 0, "trainer: weight_decay must be >= 0");
  for (const auto& [epoch, factor] : lr_drops) {
    (void)epoch;
    require(factor > 0, "trainer: lr drop factor must be > 0");
  }
  require(policy.input_noise_sigma >= 0, "trainer: input noise must be >= 0");
  require(policy.mixup_k >= 1, "trainer: mixup k must be >= 1");
  require(policy.cutmix_prob >= 0 && policy.cutmix_prob <= 1,
          "trainer: cutmix probability must be in [0,1]");
  require(policy.maxup_candidates >= 1, "trainer: maxup needs at least one candidate");
  if (dp_sgd) {
    require(dp_sgd->clip_norm > 0, "trainer: dp_sgd clip_norm must be > 0");
    require(dp_sgd->gauss_noise >= 0, "trainer: dp_sgd noise must be >= 0");
  }
}

namespace {

template <typename Scalar>
Scalar loss_grad_impl(const Network<Scalar>& net, std::span<const LabeledImage> batch,
                      typename Network<Scalar>::Vector& grad, std::size_t* correct) {
  using Vector = typename Network<Scalar>::Vector;
  require(!batch.empty(), "empty batch");
  grad = Vector::Zero(net.parameter_count());
  typename Network<Scalar>::Trace trace;
  Scalar total = 0;
  // Fixed reduction order: example index ascending.
  for (const auto& ex : batch) {
    net.forward(ex.image.pixels.template cast<Scalar>(), trace);
    const Vector& z = trace.values.back();
    total += soft_cross_entropy(z, ex.label.probs);
    net.backward(trace, soft_cross_entropy_grad(z, ex.label.probs), &grad, nullptr);
    if (correct) {
      Eigen::Index arg = 0;
      for (Eigen::Index c = 1; c < z.size(); ++c)
        if (z[c] > z[arg]) arg = c;
      if (static_cast<std::size_t>(arg) == ex.label.hard()) ++*correct;
    }
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(batch.size());
  grad *= inv;
  return total * inv;
}

LabeledImage flip_horizontal(LabeledImage li) {
  const auto& s = li.image.shape;
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t r = 0; r < s.height; ++r)
      for (std::size_t q = 0; q < s.width / 2; ++q)
        std::swap(li.image.at(c, r, q), li.image.at(c, r, s.width - 1 - q));
  return li;
}

LabeledImage random_crop(const LabeledImage& li, std::size_t pad, Rng& rng) {
  const auto& s = li.image.shape;
  const auto dy = static_cast<long>(uniform_index(rng, 2 * pad + 1)) - static_cast<long>(pad);
  const auto dx = static_cast<long>(uniform_index(rng, 2 * pad + 1)) - static_cast<long>(pad);
  LabeledImage out = li;
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t r = 0; r < s.height; ++r)
      for (std::size_t q = 0; q < s.width; ++q) {
        const long sr = static_cast<long>(r) + dy, sq = static_cast<long>(q) + dx;
        const bool inside = sr >= 0 && sq >= 0 && sr < static_cast<long>(s.height) &&
                            sq < static_cast<long>(s.width);
        out.image.at(c, r, q) =
            inside ? li.image.at(c, static_cast<std::size_t>(sr), static_cast<std::size_t>(sq)) : 0.0;
      }
  return out;
}

void add_input_noise(LabeledImage& li, double sigma, Rng& rng) {
  if (sigma > 0) li.image.pixels += sample_laplace(sigma, li.image.shape.size(), rng);
}

// Builds the training inputs for one minibatch according to the policy.
class BatchAugmenter {
 public:
  BatchAugmenter(const TrainConfig& cfg, const Network<double>& net) : cfg_(cfg), net_(net) {}

  std::vector<LabeledImage> build(const LabeledDataset& ds, std::span<const std::size_t> idx,
                                  std::size_t epoch, std::uint64_t batch_seed) const {
    const auto& pol = cfg_.policy;
    std::vector<LabeledImage> base;
    base.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& e = ds.examples[idx[i]];
      LabeledImage li{e.image, e.label};
      if (pol.horizontal_flip) {
        Rng rng = make_rng(derive_seed(batch_seed, "flip", i));
        if (uniform_open01(rng) < 0.5) li = flip_horizontal(std::move(li));
      }
      if (pol.crop_padding > 0) {
        Rng rng = make_rng(derive_seed(batch_seed, "crop", i));
        li = random_crop(li, pol.crop_padding, rng);
      }
      base.push_back(std::move(li));
    }

    std::vector<LabeledImage> out;
    out.reserve(base.size());
    switch (pol.kind) {
      case AugmentationKind::kNone:
        for (std::size_t i = 0; i < base.size(); ++i) out.push_back(noised(base[i], batch_seed, i));
        break;
      case AugmentationKind::kMixup:
        for (std::size_t i = 0; i < base.size(); ++i) {
          Rng rng = make_rng(derive_seed(batch_seed, "mix", i));
          LabeledImage m = base[i];
          for (std::size_t j = 1; j < pol.mixup_k; ++j) {
            const auto& partner = base[uniform_index(rng, base.size())];
            m.image.pixels += partner.image.pixels;
            m.label.probs += partner.label.probs;
          }
          const double inv = 1.0 / static_cast<double>(pol.mixup_k);
          m.image.pixels *= inv;
          m.label.probs *= inv;
          out.push_back(noised(m, batch_seed, i));
        }
        break;
      case AugmentationKind::kCutMix: {
        Rng gate = make_rng(derive_seed(batch_seed, "cutmix-gate"));
        const bool active = uniform_open01(gate) < pol.cutmix_prob;
        const auto& s = base.front().image.shape;
        for (std::size_t i = 0; i < base.size(); ++i) {
          if (!active) {
            out.push_back(noised(base[i], batch_seed, i));
            continue;
          }
          Rng rng = make_rng(derive_seed(batch_seed, "cutmix", i));
          const auto& partner = base[uniform_index(rng, base.size())];
          const double side = std::sqrt(uniform_open01(rng));
          PatchSpec patch{static_cast<std::size_t>(std::floor(side * s.height)),
                          static_cast<std::size_t>(std::floor(side * s.width)), std::nullopt};
          out.push_back(noised(cutmix(base[i], partner, patch, rng), batch_seed, i));
        }
        break;
      }
      case AugmentationKind::kCutout:
        for (std::size_t i = 0; i < base.size(); ++i) out.push_back(candidate(base[i], batch_seed, i, 0));
        break;
      case AugmentationKind::kMaxUp: {
        const std::size_t count = epoch >= pol.maxup_warmup_epochs ? pol.maxup_candidates : 1;
        for (std::size_t i = 0; i < base.size(); ++i) {
          if (count == 1) {
            out.push_back(candidate(base[i], batch_seed, i, 0));
            continue;
          }
          std::vector<LabeledImage> cands;
          std::vector<double> losses;
          for (std::size_t j = 0; j < count; ++j) {
            cands.push_back(candidate(base[i], batch_seed, i, j));
            losses.push_back(soft_cross_entropy(net_.logits(cands.back().image.pixels),
                                                cands.back().label.probs));
          }
          out.push_back(std::move(cands[maxup_select(losses)]));
        }
        break;
      }
    }
    return out;
  }

 private:
  LabeledImage noised(LabeledImage li, std::uint64_t batch_seed, std::size_t i) const {
    if (cfg_.policy.input_noise_sigma > 0) {
      Rng rng = make_rng(derive_seed(batch_seed, "noise", i));
      add_input_noise(li, cfg_.policy.input_noise_sigma, rng);
    }
    return li;
  }

  // Cutout draw j for slot i, followed by input noise from the same stream.
  LabeledImage candidate(const LabeledImage& li, std::uint64_t batch_seed, std::size_t i,
                         std::size_t j) const {
    const auto& s = li.image.shape;
    const std::size_t side = cfg_.policy.cutout_size > 0
                                 ? cfg_.policy.cutout_size
                                 : std::max<std::size_t>(1, std::min(s.height, s.width) / 2);
    Rng rng = make_rng(derive_seed(batch_seed, "cand", i, j));
    LabeledImage out{cutout(li.image, PatchSpec{side, side, std::nullopt}, rng), li.label};
    add_input_noise(out, cfg_.policy.input_noise_sigma, rng);
    return out;
  }

  const TrainConfig& cfg_;
  const Network<double>& net_;
};

std::size_t argmax_lowest(const Eigen::VectorXd& z) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < z.size(); ++c)
    if (z[c] > z[best]) best = c;
  return static_cast<std::size_t>(best);
}

}  // namespace

template <typename Scalar>
Scalar batch_loss_and_gradient(const Network<Scalar>& net, std::span<const LabeledImage> batch,
                               typename Network<Scalar>::Vector& grad) {
  return loss_grad_impl(net, batch, grad, nullptr);
}

template float batch_loss_and_gradient<float>(const Network<float>&, std::span<const LabeledImage>,
                                              Network<float>::Vector&);
template double batch_loss_and_gradient<double>(const Network<double>&,
                                                std::span<const LabeledImage>,
                                                Network<double>::Vector&);

Model train(const LabeledDataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
            const TrainHooks& hooks) {
  cfg.validate();
  ds.validate(/*require_unit_range=*/false);
  require(ds.shape() == spec.input, "train: dataset image shape does not match the model");
  require(ds.class_count == spec.classes, "train: dataset class count does not match the model");

  Model model(spec);
  model.net.initialize(derive_seed(cfg.seed, "init"));
  Eigen::VectorXd& params = model.net.parameters();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd grad;
  BatchAugmenter augmenter(cfg, model.net);

  double lr = cfg.lr;
  std::size_t step = 0;
  std::vector<std::size_t> order(ds.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& [at, factor] : cfg.lr_drops)
      if (at == epoch) lr *= factor;
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(derive_seed(cfg.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++step) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const std::uint64_t batch_seed = derive_seed(cfg.seed, "batch", step);
      const auto batch = augmenter.build(ds, idx, epoch, batch_seed);

      const double loss = loss_grad_impl(model.net, std::span<const LabeledImage>(batch), grad, &correct);
      if (!std::isfinite(loss))
        throw TrainingDiverged("train: non-finite loss at batch " + std::to_string(step), step);

      StepInfo info{epoch, step, loss, grad.norm(), 0.0};
      if (cfg.dp_sgd) {
        // Clip the aggregated minibatch gradient, then add Gaussian noise.
        if (info.raw_grad_norm > cfg.dp_sgd->clip_norm) grad *= cfg.dp_sgd->clip_norm / info.raw_grad_norm;
        info.clipped_grad_norm = grad.norm();
        if (cfg.dp_sgd->gauss_noise > 0) {
          Rng rng = make_rng(derive_seed(cfg.seed, "dp-noise", step));
          std::normal_distribution<double> gauss(0.0, cfg.dp_sgd->gauss_noise);
          for (Eigen::Index i = 0; i < grad.size(); ++i) grad[i] += gauss(rng);
        }
      } else {
        info.clipped_grad_norm = info.raw_grad_norm;
      }
      if (hooks.on_step) hooks.on_step(info);

      grad += cfg.weight_decay * params;
      velocity = cfg.momentum * velocity + grad;
      params -= lr * velocity;
      if (!params.allFinite())
        throw TrainingDiverged("train: non-finite parameters after batch " + std::to_string(step), step);

      loss_sum += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(seen),
                   static_cast<double>(correct) / static_cast<double>(seen), std::nullopt};
    if (hooks.eval && !hooks.eval->empty()) entry.test_acc = clean_accuracy(model, *hooks.eval);
    model.log.push_back(entry);
  }
  return model;
}

Prediction predict(const Model& model, const ImageTensor& img) {
  require(img.shape == model.spec.input, "predict: image shape does not match the model");
  Prediction p;
  p.logits = model.net.logits(img.pixels);
  p.label = argmax_lowest(p.logits);
  return p;
}

double clean_accuracy(const Model& model, const LabeledDataset& test) {
  require(!test.empty(), "clean_accuracy: empty test set");
  std::size_t hits = 0;
  for (const auto& e : test.examples)
    if (predict(model, e.image).label == e.label.hard()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

double poison_success(const Model& model, const LabeledDataset& patched_victims,
                      std::size_t target_class) {
  require(!patched_victims.empty(), "poison_success: empty patched set");
  std::size_t hits = 0;
  for (const auto& e : patched_victims.examples)
    if (predict(model, e.image).label == target_class) ++hits;
  return static_cast<double>(hits) / static_cast<double>(patched_victims.size());
}

Eigen::MatrixXd extract_features(const Model& model, const LabeledDataset& ds) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ds.size()), model.net.feature_dim());
  for (std::size_t i = 0; i < ds.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = model.net.features(ds.examples[i].image.pixels).transpose();
  return out;
}

namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'D', 'P', 'M', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> raw;
  std::memcpy(raw.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.write(raw.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<char, sizeof(T)> raw;
  if (!in.read(raw.data(), sizeof(T))) throw FormatError("checkpoint: truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T v;
  std::memcpy(&v, raw.data(), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.architecture));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.input.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.input.width));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.input.channels));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.classes));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.hidden.size()));
  for (auto h : model.spec.hidden) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  const auto& p = model.net.parameters();
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) put_le<float>(out, static_cast<float>(p[i]));
  if (!out) throw FormatError("checkpoint: write failed");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw FormatError("checkpoint: bad magic");
  if (get_le<std::uint32_t>(in) != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
  ModelSpec spec;
  const auto arch = get_le<std::uint32_t>(in);
  if (arch > 1) throw FormatError("checkpoint: unknown architecture");
  spec.architecture = static_cast<Architecture>(arch);
  spec.input.height = get_le<std::uint32_t>(in);
  spec.input.width = get_le<std::uint32_t>(in);
  spec.input.channels = get_le<std::uint32_t>(in);
  spec.classes = get_le<std::uint32_t>(in);
  const auto hidden = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < hidden; ++i) spec.hidden.push_back(get_le<std::uint32_t>(in));
  Model model(spec);
  const auto count = get_le<std::uint64_t>(in);
  if (count != static_cast<std::uint64_t>(model.net.parameter_count()))
    throw FormatError("checkpoint: parameter count does not match the architecture");
  auto& p = model.net.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = get_le<float>(in);
  return model;
}

std::string training_log_csv(const Model& model) {
  std::string out = "epoch,loss,train_acc,test_acc\n";
  for (const auto& e : model.log)
    out += join_csv({format_count(e.epoch), format_real(e.loss), format_real(e.train_acc),
                     format_optional(e.test_acc)}) + "\n";
  return out;
}

}  // namespace dpmix
