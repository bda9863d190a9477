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
#include <cmath>
#include <cstdint>
#include <vector>

#include "dpmix/datastore.hpp"

namespace dpmix {

enum class Architecture { kMlp, kSmallConv };

struct ModelSpec {
  Architecture architecture = Architecture::kSmallConv;
  ImageShape input;
  std::size_t classes = 0;
  std::vector<std::size_t> hidden;  // MLP hidden widths

  static ModelSpec mlp(ImageShape input, std::size_t classes, std::vector<std::size_t> hidden);
  /// conv3x3x16 -> ReLU -> maxpool2 -> conv3x3x32 -> ReLU -> maxpool2 -> dense.
  static ModelSpec small_conv(ImageShape input, std::size_t classes);
  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

enum class LayerKind { kDense, kConv3x3, kRelu, kMaxPool2 };

struct Layer {
  LayerKind kind;
  ImageShape in;   // dense layers use {size, 1, 1}
  ImageShape out;
  Eigen::Index param_offset = 0;
  Eigen::Index weight_count = 0;
  Eigen::Index bias_count = 0;
};

/// A feed-forward classifier whose parameters live in one flat vector. The
/// last layer is a dense head; its input is the penultimate feature vector.
template <typename Scalar>
class Network {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  /// Layer inputs and outputs of one forward pass; values[i] feeds layer i.
  struct Trace {
    std::vector<Vector> values;
    std::vector<std::vector<Eigen::Index>> argmax;  // per layer, pool layers only
  };

  explicit Network(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  Eigen::Index parameter_count() const { return params_.size(); }
  Eigen::Index feature_dim() const;

  /// He-uniform weights, zero biases.
  void initialize(std::uint64_t seed);

  template <typename Other>
  Network<Other> cast() const {
    Network<Other> out(spec_);
    out.parameters() = params_.template cast<Other>();
    return out;
  }

  void forward(const Vector& input, Trace& trace) const;
  Vector logits(const Vector& input) const;
  Vector features(const Vector& input) const;
  const Vector& features(const Trace& trace) const { return trace.values[layers_.size() - 1]; }

  /// Backpropagates dL/dlogits. Accumulates into *grad and writes *dinput
  /// when the pointers are non-null.
  void backward(const Trace& trace, const Vector& dlogits, Vector* grad, Vector* dinput) const;
  /// Backpropagates dL/dfeatures through every layer below the head.
  void backward_features(const Trace& trace, const Vector& dfeatures, Vector* grad,
                         Vector* dinput) const;

 private:
  void backward_from(std::size_t top, const Trace& trace, Vector upstream, Vector* grad,
                     Vector* dinput) const;

  ModelSpec spec_;
  std::vector<Layer> layers_;
  Vector params_;
};

extern template class Network<float>;
extern template class Network<double>;

/// -sum_c y_c log softmax(z)_c with the max-shift stabilization.
template <typename DerivedZ, typename DerivedY>
typename DerivedZ::Scalar soft_cross_entropy(const Eigen::MatrixBase<DerivedZ>& logits,
                                             const Eigen::MatrixBase<DerivedY>& label) {
  using Scalar = typename DerivedZ::Scalar;
  const Scalar hi = logits.maxCoeff();
  const Scalar lse = hi + std::log((logits.array() - hi).exp().sum());
  return -(label.template cast<Scalar>().array() * (logits.array() - lse)).sum();
}

/// softmax(z) - y, the gradient of soft_cross_entropy in the logits.
template <typename DerivedZ, typename DerivedY>
Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, 1> soft_cross_entropy_grad(
    const Eigen::MatrixBase<DerivedZ>& logits, const Eigen::MatrixBase<DerivedY>& label) {
  using Scalar = typename DerivedZ::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p = (logits.array() - logits.maxCoeff()).exp();
  p /= p.sum();
  return p - label.template cast<Scalar>();
}

}  // namespace dpmix
