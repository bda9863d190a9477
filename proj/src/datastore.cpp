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

#include "dpmix/datastore.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace dpmix {
namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;
constexpr std::array<char, 4> kContainerMagic = {'D', 'P', 'M', 'X'};
constexpr std::uint32_t kContainerVersion = 1;

// Little-endian primitives for the container format.
template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> raw;
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.write(raw.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> raw;
  if (!in.read(raw.data(), sizeof(T))) throw FormatError("container: truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

}  // namespace

ImageTensor::ImageTensor(ImageShape s, Eigen::VectorXd p) : shape(s), pixels(std::move(p)) {
  require(static_cast<std::size_t>(pixels.size()) == shape.size(),
          "ImageTensor: pixel count does not match H*W*C");
}

ImageTensor ImageTensor::zeros(ImageShape s) {
  return ImageTensor(s, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.size())));
}

SoftLabel SoftLabel::one_hot(std::size_t classes, std::size_t index) {
  require(index < classes, "one_hot: class index out of range");
  SoftLabel l{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes))};
  l.probs[static_cast<Eigen::Index>(index)] = 1.0;
  return l;
}

std::size_t SoftLabel::hard() const {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return static_cast<std::size_t>(best);
}

bool SoftLabel::on_simplex(double tol) const {
  if ((probs.array() < 0).any()) return false;
  return std::abs(probs.sum() - 1.0) <= tol;
}

std::vector<std::size_t> LabeledDataset::indices_of_class(std::size_t c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (examples[i].label.hard() == c) out.push_back(i);
  return out;
}

void LabeledDataset::validate(bool require_unit_range) const {
  require(!examples.empty(), "dataset is empty");
  const ImageShape s = shape();
  for (const auto& e : examples) {
    require(e.image.shape == s, "dataset: images do not share one shape");
    require(static_cast<std::size_t>(e.image.pixels.size()) == s.size(),
            "dataset: pixel count mismatch");
    require(e.label.classes() == class_count, "dataset: label width != class count");
    require(e.label.on_simplex(), "dataset: label not on the simplex");
    if (require_unit_range)
      require((e.image.pixels.array() >= 0).all() && (e.image.pixels.array() <= 1).all(),
              "dataset: pixel outside [0,1]");
  }
}

LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path) {
  const auto img = read_bytes(image_path);
  const auto lab = read_bytes(label_path);
  if (img.size() < 16) throw FormatError("idx images: truncated header");
  if (lab.size() < 8) throw FormatError("idx labels: truncated header");
  if (read_be32(img, 0) != kIdxImageMagic) throw FormatError("idx images: bad magic");
  if (read_be32(lab, 0) != kIdxLabelMagic) throw FormatError("idx labels: bad magic");
  const std::size_t n = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  const std::size_t n_labels = read_be32(lab, 4);
  if (n != n_labels) throw FormatError("idx: image/label count mismatch");
  const std::size_t d = rows * cols;
  if (img.size() < 16 + n * d) throw FormatError("idx images: truncated file");
  if (lab.size() < 8 + n) throw FormatError("idx labels: truncated file");
  if (n == 0) throw FormatError("idx: no records");

  LabeledDataset ds;
  ds.name = image_path.filename().string();
  ds.class_count = 10;
  ds.examples.reserve(n);
  const ImageShape shape{rows, cols, 1};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = lab[8 + i];
    if (label >= 10) throw FormatError("idx labels: label byte > 9");
    Example e;
    e.image = ImageTensor::zeros(shape);
    for (std::size_t p = 0; p < d; ++p)
      e.image.pixels[static_cast<Eigen::Index>(p)] = img[16 + i * d + p] / 255.0;
    e.label = SoftLabel::one_hot(10, label);
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

LabeledDataset load_cifar_binary(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw FormatError("cifar: truncated record (size not a multiple of 3073)");
  const std::size_t n = bytes.size() / kCifarRecord;
  const ImageShape shape{32, 32, 3};
  LabeledDataset ds;
  ds.name = path.filename().string();
  ds.class_count = 10;
  ds.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = i * kCifarRecord;
    if (bytes[off] > 9) throw FormatError("cifar: label byte > 9");
    Example e;
    e.image = ImageTensor::zeros(shape);
    for (std::size_t p = 0; p < shape.size(); ++p)
      e.image.pixels[static_cast<Eigen::Index>(p)] = bytes[off + 1 + p] / 255.0;
    e.label = SoftLabel::one_hot(10, bytes[off]);
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

LabeledDataset synth_blobs(const BlobSpec& spec) {
  require(spec.classes >= 2, "synth_blobs: need at least 2 classes");
  require(spec.per_class >= 1, "synth_blobs: per_class must be >= 1");
  require(spec.separation >= 0, "synth_blobs: separation must be >= 0");
  require(spec.noise >= 0, "synth_blobs: noise must be >= 0");
  require(spec.shape.size() > 0, "synth_blobs: empty shape");
  const auto d = static_cast<Eigen::Index>(spec.shape.size());

  std::vector<Eigen::VectorXd> templates;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng rng = make_rng(derive_seed(spec.seed, "blob-template", c));
    Eigen::VectorXd t(d);
    for (Eigen::Index p = 0; p < d; ++p) t[p] = 0.5 + spec.separation * (uniform_open01(rng) - 0.5);
    templates.push_back(std::move(t));
  }

  LabeledDataset ds;
  ds.name = "blobs";
  ds.class_count = spec.classes;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Rng rng = make_rng(derive_seed(spec.seed, "blob-sample", c, i));
      std::normal_distribution<double> gauss(0.0, 1.0);
      Eigen::VectorXd x(d);
      for (Eigen::Index p = 0; p < d; ++p) x[p] = templates[c][p] + spec.noise * gauss(rng);
      Example e;
      e.image = ImageTensor(spec.shape, x.cwiseMax(0.0).cwiseMin(1.0));
      e.label = SoftLabel::one_hot(spec.classes, c);
      ds.examples.push_back(std::move(e));
    }
  }
  return ds;
}

RescaledDataset rescale_to_diameter(const LabeledDataset& ds, DiameterModel target) {
  require(target.delta > 0, "rescale_to_diameter: delta must be > 0");
  require(!ds.empty(), "rescale_to_diameter: empty dataset");
  RescaledDataset out{ds, target.delta / static_cast<double>(ds.shape().size())};
  for (auto& e : out.data.examples) e.image.pixels *= out.scale;
  return out;
}

LabeledDataset restore_from_diameter(const RescaledDataset& rescaled) {
  LabeledDataset out = rescaled.data;
  for (auto& e : out.examples) e.image.pixels /= rescaled.scale;
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                std::uint64_t seed) {
  require(train_fraction > 0 && train_fraction < 1, "split: train_fraction must be in (0,1)");
  require(!ds.empty(), "split: empty dataset");
  LabeledDataset train{ds.name + ".train", ds.class_count, {}};
  LabeledDataset test{ds.name + ".test", ds.class_count, {}};
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    auto members = ds.indices_of_class(c);
    if (members.empty()) continue;
    if (members.size() < 2)
      throw InvalidArgument("split: class " + std::to_string(c) +
                            " has fewer than 2 examples and cannot be stratified");
    Rng rng = make_rng(derive_seed(seed, "split", c));
    std::shuffle(members.begin(), members.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * members.size()));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + n_train);
    test_idx.insert(test_idx.end(), members.begin() + n_train, members.end());
  }
  // Keep the source order inside each side.
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  for (auto i : train_idx) train.examples.push_back(ds.examples[i]);
  for (auto i : test_idx) test.examples.push_back(ds.examples[i]);
  return {std::move(train), std::move(test)};
}

ChannelStats channel_stats(const LabeledDataset& ds) {
  require(!ds.empty(), "channel_stats: empty dataset");
  const ImageShape s = ds.shape();
  const std::size_t plane = s.height * s.width;
  ChannelStats st{std::vector<double>(s.channels, 0.0), std::vector<double>(s.channels, 0.0)};
  for (std::size_t c = 0; c < s.channels; ++c) {
    double sum = 0, sq = 0;
    for (const auto& e : ds.examples) {
      auto seg = e.image.pixels.segment(static_cast<Eigen::Index>(c * plane),
                                        static_cast<Eigen::Index>(plane));
      sum += seg.sum();
      sq += seg.squaredNorm();
    }
    const double count = static_cast<double>(plane * ds.size());
    st.mean[c] = sum / count;
    st.stddev[c] = std::sqrt(std::max(0.0, sq / count - st.mean[c] * st.mean[c]));
  }
  return st;
}

void write_container(std::ostream& out, const LabeledDataset& ds,
                     const std::optional<CertificateBlock>& certificate) {
  require(!ds.empty(), "write_container: empty dataset");
  const ImageShape s = ds.shape();
  out.write(kContainerMagic.data(), kContainerMagic.size());
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint32_t>(out, certificate ? 1u : 0u);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.channels));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.class_count));
  put<std::uint64_t>(out, ds.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.name.size()));
  out.write(ds.name.data(), static_cast<std::streamsize>(ds.name.size()));
  if (certificate) {
    const auto& c = *certificate;
    put(out, c.n);
    put(out, c.T);
    put(out, c.k);
    for (double v : {c.sigma, c.delta, c.branch_a, c.branch_b, c.epsilon, c.upper_bound,
                     c.dp_delta})
      put(out, v);
  }
  for (const auto& e : ds.examples) {
    for (Eigen::Index p = 0; p < e.image.pixels.size(); ++p)
      put(out, static_cast<float>(e.image.pixels[p]));
    for (Eigen::Index p = 0; p < e.label.probs.size(); ++p)
      put(out, static_cast<float>(e.label.probs[p]));
    put<std::uint8_t>(out, e.poisoned ? 1 : 0);
  }
  if (!out) throw FormatError("container: write failed");
}

void write_container(const std::filesystem::path& path, const LabeledDataset& ds,
                     const std::optional<CertificateBlock>& certificate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_container(out, ds, certificate);
}

ContainerContents read_container(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kContainerMagic)
    throw FormatError("container: bad magic");
  if (get<std::uint32_t>(in) != kContainerVersion) throw FormatError("container: unsupported version");
  const auto kind = get<std::uint32_t>(in);
  if (kind > 1) throw FormatError("container: unknown kind");
  ImageShape s;
  s.height = get<std::uint32_t>(in);
  s.width = get<std::uint32_t>(in);
  s.channels = get<std::uint32_t>(in);
  const std::size_t m = get<std::uint32_t>(in);
  const auto n = get<std::uint64_t>(in);
  const auto name_len = get<std::uint32_t>(in);
  ContainerContents out;
  out.data.name.resize(name_len);
  if (!in.read(out.data.name.data(), name_len)) throw FormatError("container: truncated");
  out.data.class_count = m;
  if (kind == 1) {
    CertificateBlock c;
    c.n = get<std::uint64_t>(in);
    c.T = get<std::uint64_t>(in);
    c.k = get<std::uint64_t>(in);
    for (double* v : {&c.sigma, &c.delta, &c.branch_a, &c.branch_b, &c.epsilon, &c.upper_bound,
                      &c.dp_delta})
      *v = get<double>(in);
    out.certificate = c;
  }
  out.data.examples.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Example e;
    e.image = ImageTensor::zeros(s);
    for (Eigen::Index p = 0; p < e.image.pixels.size(); ++p) e.image.pixels[p] = get<float>(in);
    e.label.probs.resize(static_cast<Eigen::Index>(m));
    for (Eigen::Index p = 0; p < e.label.probs.size(); ++p) e.label.probs[p] = get<float>(in);
    e.poisoned = get<std::uint8_t>(in) != 0;
    out.data.examples.push_back(std::move(e));
  }
  return out;
}

ContainerContents read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_container(in);
}

}  // namespace dpmix
