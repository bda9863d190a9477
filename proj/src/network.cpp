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

#include "dpmix/network.hpp"

namespace dpmix {

ModelSpec ModelSpec::mlp(ImageShape input, std::size_t classes, std::vector<std::size_t> hidden) {
  return {Architecture::kMlp, input, classes, std::move(hidden)};
}

ModelSpec ModelSpec::small_conv(ImageShape input, std::size_t classes) {
  return {Architecture::kSmallConv, input, classes, {}};
}

void ModelSpec::validate() const {
  require(input.size() > 0, "model: empty input shape");
  require(classes >= 2, "model: need at least 2 classes");
  if (architecture == Architecture::kSmallConv) {
    require(input.height >= 4 && input.width >= 4, "model: small conv needs inputs of at least 4x4");
    require(hidden.empty(), "model: hidden widths apply to the MLP only");
  } else {
    for (auto h : hidden) require(h >= 1, "model: hidden width must be >= 1");
  }
}

namespace {

ImageShape flat(std::size_t n) { return {n, 1, 1}; }

// Column matrix of 3x3 neighborhoods with zero padding: row ci*9 + ky*3 + kx,
// column y*W + x.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> im2col(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, const ImageShape& s) {
  const auto H = static_cast<Eigen::Index>(s.height), W = static_cast<Eigen::Index>(s.width);
  const auto C = static_cast<Eigen::Index>(s.channels);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cols =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(C * 9, H * W);
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index ky = 0; ky < 3; ++ky)
      for (Eigen::Index kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (Eigen::Index y = 0; y < H; ++y) {
          const Eigen::Index sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (Eigen::Index xx = 0; xx < W; ++xx) {
            const Eigen::Index sx = xx + kx - 1;
            if (sx < 0 || sx >= W) continue;
            cols(row, y * W + xx) = x[(c * H + sy) * W + sx];
          }
        }
      }
  return cols;
}

template <typename Scalar>
void col2im_add(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cols,
                const ImageShape& s, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& dx) {
  const auto H = static_cast<Eigen::Index>(s.height), W = static_cast<Eigen::Index>(s.width);
  const auto C = static_cast<Eigen::Index>(s.channels);
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index ky = 0; ky < 3; ++ky)
      for (Eigen::Index kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (Eigen::Index y = 0; y < H; ++y) {
          const Eigen::Index sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (Eigen::Index xx = 0; xx < W; ++xx) {
            const Eigen::Index sx = xx + kx - 1;
            if (sx < 0 || sx >= W) continue;
            dx[(c * H + sy) * W + sx] += cols(row, y * W + xx);
          }
        }
      }
}

}  // namespace

template <typename Scalar>
Network<Scalar>::Network(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Eigen::Index offset = 0;
  auto add_dense = [&](std::size_t in, std::size_t out) {
    Layer l{LayerKind::kDense, flat(in), flat(out), offset,
            static_cast<Eigen::Index>(in * out), static_cast<Eigen::Index>(out)};
    offset += l.weight_count + l.bias_count;
    layers_.push_back(l);
  };
  auto add_relu = [&](ImageShape s) { layers_.push_back({LayerKind::kRelu, s, s, offset, 0, 0}); };

  if (spec_.architecture == Architecture::kMlp) {
    std::size_t width = spec_.input.size();
    for (auto h : spec_.hidden) {
      add_dense(width, h);
      add_relu(flat(h));
      width = h;
    }
    add_dense(width, spec_.classes);
  } else {
    ImageShape s = spec_.input;
    for (std::size_t filters : {16u, 32u}) {
      const ImageShape conv_out{s.height, s.width, filters};
      Layer conv{LayerKind::kConv3x3, s, conv_out, offset,
                 static_cast<Eigen::Index>(filters * s.channels * 9),
                 static_cast<Eigen::Index>(filters)};
      offset += conv.weight_count + conv.bias_count;
      layers_.push_back(conv);
      add_relu(conv_out);
      const ImageShape pooled{conv_out.height / 2, conv_out.width / 2, filters};
      layers_.push_back({LayerKind::kMaxPool2, conv_out, pooled, offset, 0, 0});
      s = pooled;
    }
    add_dense(s.size(), spec_.classes);
  }
  params_ = Vector::Zero(offset);
}

template <typename Scalar>
Eigen::Index Network<Scalar>::feature_dim() const {
  return static_cast<Eigen::Index>(layers_.back().in.size());
}

template <typename Scalar>
void Network<Scalar>::initialize(std::uint64_t seed) {
  Rng rng = make_rng(seed);
  params_.setZero();
  for (const auto& l : layers_) {
    if (l.weight_count == 0) continue;
    const double fan_in = l.kind == LayerKind::kDense ? static_cast<double>(l.in.size())
                                                      : static_cast<double>(l.in.channels * 9);
    const double bound = std::sqrt(6.0 / fan_in);
    for (Eigen::Index i = 0; i < l.weight_count; ++i)
      params_[l.param_offset + i] = static_cast<Scalar>((2.0 * uniform_open01(rng) - 1.0) * bound);
  }
}

template <typename Scalar>
void Network<Scalar>::forward(const Vector& input, Trace& trace) const {
  require(static_cast<std::size_t>(input.size()) == spec_.input.size(),
          "network: input size does not match the model");
  trace.values.resize(layers_.size() + 1);
  trace.argmax.resize(layers_.size());
  trace.values[0] = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const Vector& x = trace.values[i];
    Vector& y = trace.values[i + 1];
    switch (l.kind) {
      case LayerKind::kDense: {
        const auto in = static_cast<Eigen::Index>(l.in.size());
        const auto out = static_cast<Eigen::Index>(l.out.size());
        Eigen::Map<const Matrix> w(params_.data() + l.param_offset, out, in);
        Eigen::Map<const Vector> b(params_.data() + l.param_offset + l.weight_count, out);
        y = w * x + b;
        break;
      }
      case LayerKind::kConv3x3: {
        const auto cin = static_cast<Eigen::Index>(l.in.channels);
        const auto cout = static_cast<Eigen::Index>(l.out.channels);
        const auto hw = static_cast<Eigen::Index>(l.in.height * l.in.width);
        Eigen::Map<const Matrix> w(params_.data() + l.param_offset, cout, cin * 9);
        Eigen::Map<const Vector> b(params_.data() + l.param_offset + l.weight_count, cout);
        y.resize(cout * hw);
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ym(
            y.data(), cout, hw);
        ym.noalias() = w * im2col<Scalar>(x, l.in);
        ym.colwise() += b;
        break;
      }
      case LayerKind::kRelu:
        y = x.cwiseMax(Scalar(0));
        break;
      case LayerKind::kMaxPool2: {
        const std::size_t H = l.in.height, W = l.in.width, Ho = l.out.height, Wo = l.out.width;
        y.resize(static_cast<Eigen::Index>(l.out.size()));
        auto& arg = trace.argmax[i];
        arg.resize(l.out.size());
        for (std::size_t c = 0; c < l.out.channels; ++c)
          for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              auto best = static_cast<Eigen::Index>((c * H + 2 * oy) * W + 2 * ox);
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const auto idx = static_cast<Eigen::Index>((c * H + 2 * oy + dy) * W + 2 * ox + dx);
                  if (x[idx] > x[best]) best = idx;
                }
              const auto o = static_cast<Eigen::Index>((c * Ho + oy) * Wo + ox);
              y[o] = x[best];
              arg[static_cast<std::size_t>(o)] = best;
            }
        break;
      }
    }
  }
}

template <typename Scalar>
typename Network<Scalar>::Vector Network<Scalar>::logits(const Vector& input) const {
  Trace t;
  forward(input, t);
  return t.values.back();
}

template <typename Scalar>
typename Network<Scalar>::Vector Network<Scalar>::features(const Vector& input) const {
  Trace t;
  forward(input, t);
  return t.values[layers_.size() - 1];
}

template <typename Scalar>
void Network<Scalar>::backward(const Trace& trace, const Vector& dlogits, Vector* grad,
                               Vector* dinput) const {
  backward_from(layers_.size(), trace, dlogits, grad, dinput);
}

template <typename Scalar>
void Network<Scalar>::backward_features(const Trace& trace, const Vector& dfeatures, Vector* grad,
                                        Vector* dinput) const {
  backward_from(layers_.size() - 1, trace, dfeatures, grad, dinput);
}

template <typename Scalar>
void Network<Scalar>::backward_from(std::size_t top, const Trace& trace, Vector upstream,
                                    Vector* grad, Vector* dinput) const {
  if (grad && grad->size() != params_.size()) *grad = Vector::Zero(params_.size());
  for (std::size_t i = top; i-- > 0;) {
    const Layer& l = layers_[i];
    const Vector& x = trace.values[i];
    Vector down;
    switch (l.kind) {
      case LayerKind::kDense: {
        const auto in = static_cast<Eigen::Index>(l.in.size());
        const auto out = static_cast<Eigen::Index>(l.out.size());
        Eigen::Map<const Matrix> w(params_.data() + l.param_offset, out, in);
        if (grad) {
          Eigen::Map<Matrix> gw(grad->data() + l.param_offset, out, in);
          gw.noalias() += upstream * x.transpose();
          grad->segment(l.param_offset + l.weight_count, out) += upstream;
        }
        if (i > 0 || dinput) down.noalias() = w.transpose() * upstream;
        break;
      }
      case LayerKind::kConv3x3: {
        const auto cin = static_cast<Eigen::Index>(l.in.channels);
        const auto cout = static_cast<Eigen::Index>(l.out.channels);
        const auto hw = static_cast<Eigen::Index>(l.in.height * l.in.width);
        Eigen::Map<const Matrix> w(params_.data() + l.param_offset, cout, cin * 9);
        Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            dy(upstream.data(), cout, hw);
        const Matrix cols = im2col<Scalar>(x, l.in);
        if (grad) {
          Eigen::Map<Matrix> gw(grad->data() + l.param_offset, cout, cin * 9);
          gw.noalias() += dy * cols.transpose();
          grad->segment(l.param_offset + l.weight_count, cout) += dy.rowwise().sum();
        }
        if (i > 0 || dinput) {
          const Matrix dcols = w.transpose() * dy;
          down = Vector::Zero(x.size());
          col2im_add<Scalar>(dcols, l.in, down);
        }
        break;
      }
      case LayerKind::kRelu:
        down = (x.array() > Scalar(0)).select(upstream, Scalar(0));
        break;
      case LayerKind::kMaxPool2: {
        down = Vector::Zero(x.size());
        const auto& arg = trace.argmax[i];
        for (std::size_t o = 0; o < arg.size(); ++o)
          down[arg[o]] += upstream[static_cast<Eigen::Index>(o)];
        break;
      }
    }
    upstream = std::move(down);
  }
  if (dinput) *dinput = std::move(upstream);
}

template class Network<float>;
template class Network<double>;

}  // namespace dpmix
