// Copyright 2026 The CPA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CPA_NN_LAYERS_HPP_
#define CPA_NN_LAYERS_HPP_

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/core/types.hpp"

namespace cpa::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// A differentiable stage. forward() caches whatever backward() needs, so a
// layer instance serves one forward/backward pair at a time.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Matrix forward(const Matrix& x) = 0;
  // Accumulates parameter gradients and returns the input gradient.
  virtual Matrix backward(const Matrix& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual nlohmann::json describe() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
};

class Dense final : public Layer {
 public:
  Dense(int in, int out) : in_(in), out_(out) {
    require(in > 0 && out > 0, "Dense: dimensions must be positive");
    weight_ = {"weight", Matrix::Zero(in, out), Matrix::Zero(in, out)};
    bias_ = {"bias", Matrix::Zero(1, out), Matrix::Zero(1, out)};
  }

  // He-uniform weights, zero bias.
  void initialize(Rng& rng) {
    const double bound = std::sqrt(6.0 / in_);
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) {
      weight_.value.data()[i] = rng.uniform(-bound, bound);
    }
    bias_.value.setZero();
  }

  Matrix forward(const Matrix& x) override {
    if (x.cols() != in_) throw InvalidInput("Dense: input width mismatch");
    input_ = x;
    Matrix y = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  Matrix backward(const Matrix& grad_out) override {
    weight_.grad.noalias() += input_.transpose() * grad_out;
    bias_.grad += grad_out.colwise().sum();
    return grad_out * weight_.value.transpose();
  }

  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  nlohmann::json describe() const override {
    return {{"type", "dense"}, {"in", in_}, {"out", out_}};
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  int input_dim() const override { return in_; }
  int output_dim() const override { return out_; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_;
  int out_;
  Parameter weight_;
  Parameter bias_;
  Matrix input_;
};

class Relu final : public Layer {
 public:
  explicit Relu(int dim) : dim_(dim) {}

  Matrix forward(const Matrix& x) override {
    mask_ = (x.array() > 0.0).cast<double>();
    return x.cwiseMax(0.0);
  }
  Matrix backward(const Matrix& grad_out) override { return grad_out.cwiseProduct(mask_); }
  nlohmann::json describe() const override { return {{"type", "relu"}, {"dim", dim_}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
  int input_dim() const override { return dim_; }
  int output_dim() const override { return dim_; }

 private:
  int dim_;
  Matrix mask_;
};

// Rescales each row to Euclidean norm sqrt(dim). Keeps representation
// magnitudes bounded when nothing else in the objective does.
class RowNorm final : public Layer {
 public:
  explicit RowNorm(int dim) : dim_(dim), scale_(std::sqrt(static_cast<double>(dim))) {}

  Matrix forward(const Matrix& x) override {
    x_ = x;
    norms_ = (x.rowwise().squaredNorm().array() + kEps).sqrt();
    return scale_ * (x.array().colwise() / norms_.array()).matrix();
  }
  Matrix backward(const Matrix& grad_out) override {
    Matrix out(grad_out.rows(), grad_out.cols());
    for (Eigen::Index r = 0; r < grad_out.rows(); ++r) {
      const double n = norms_(r);
      const double proj = x_.row(r).dot(grad_out.row(r)) / (n * n);
      out.row(r) = (scale_ / n) * (grad_out.row(r) - proj * x_.row(r));
    }
    return out;
  }
  nlohmann::json describe() const override { return {{"type", "rownorm"}, {"dim", dim_}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<RowNorm>(*this); }
  int input_dim() const override { return dim_; }
  int output_dim() const override { return dim_; }

 private:
  static constexpr double kEps = 1e-12;
  int dim_;
  double scale_;
  Matrix x_;
  Vector norms_;
};

// 3x3 convolution, stride 1, zero padding 1, over (C, H, W) rows.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int height, int width)
      : cin_(in_channels), cout_(out_channels), h_(height), w_(width) {
    require(cin_ > 0 && cout_ > 0 && h_ > 0 && w_ > 0, "Conv2d: dimensions must be positive");
    weight_ = {"weight", Matrix::Zero(cout_, cin_ * 9), Matrix::Zero(cout_, cin_ * 9)};
    bias_ = {"bias", Matrix::Zero(cout_, 1), Matrix::Zero(cout_, 1)};
  }

  void initialize(Rng& rng) {
    const double bound = std::sqrt(6.0 / (cin_ * 9));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) {
      weight_.value.data()[i] = rng.uniform(-bound, bound);
    }
    bias_.value.setZero();
  }

  Matrix forward(const Matrix& x) override {
    if (x.cols() != input_dim()) throw InvalidInput("Conv2d: input width mismatch");
    const Eigen::Index batch = x.rows();
    const Eigen::Index hw = static_cast<Eigen::Index>(h_) * w_;
    cols_.setZero(cin_ * 9, batch * hw);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double* in = x.row(b).data();
      for (int c = 0; c < cin_; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            double* dst = cols_.row(c * 9 + ky * 3 + kx).data() + b * hw;
            for (int y = 0; y < h_; ++y) {
              const int sy = y + ky - 1;
              if (sy < 0 || sy >= h_) continue;
              for (int xx = 0; xx < w_; ++xx) {
                const int sx = xx + kx - 1;
                if (sx < 0 || sx >= w_) continue;
                dst[y * w_ + xx] = in[(c * h_ + sy) * w_ + sx];
              }
            }
          }
        }
      }
    }
    Matrix out_cols = weight_.value * cols_;
    out_cols.colwise() += bias_.value.col(0);
    Matrix y(batch, output_dim());
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (int f = 0; f < cout_; ++f) {
        y.row(b).segment(f * hw, hw) = out_cols.row(f).segment(b * hw, hw);
      }
    }
    batch_ = batch;
    return y;
  }

  Matrix backward(const Matrix& grad_out) override {
    const Eigen::Index hw = static_cast<Eigen::Index>(h_) * w_;
    Matrix g(cout_, batch_ * hw);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (int f = 0; f < cout_; ++f) {
        g.row(f).segment(b * hw, hw) = grad_out.row(b).segment(f * hw, hw);
      }
    }
    weight_.grad.noalias() += g * cols_.transpose();
    bias_.grad += g.rowwise().sum();
    const Matrix dcols = weight_.value.transpose() * g;
    Matrix dx = Matrix::Zero(batch_, input_dim());
    for (Eigen::Index b = 0; b < batch_; ++b) {
      double* out = dx.row(b).data();
      for (int c = 0; c < cin_; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double* src = dcols.row(c * 9 + ky * 3 + kx).data() + b * hw;
            for (int y = 0; y < h_; ++y) {
              const int sy = y + ky - 1;
              if (sy < 0 || sy >= h_) continue;
              for (int xx = 0; xx < w_; ++xx) {
                const int sx = xx + kx - 1;
                if (sx < 0 || sx >= w_) continue;
                out[(c * h_ + sy) * w_ + sx] += src[y * w_ + xx];
              }
            }
          }
        }
      }
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  nlohmann::json describe() const override {
    return {{"type", "conv3x3"}, {"in_channels", cin_}, {"out_channels", cout_},
            {"height", h_},      {"width", w_}};
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  int input_dim() const override { return cin_ * h_ * w_; }
  int output_dim() const override { return cout_ * h_ * w_; }

 private:
  int cin_, cout_, h_, w_;
  Parameter weight_;
  Parameter bias_;
  Matrix cols_;
  Eigen::Index batch_ = 0;
};

// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
class MaxPool2 final : public Layer {
 public:
  MaxPool2(int channels, int height, int width) : c_(channels), h_(height), w_(width) {
    require(h_ >= 2 && w_ >= 2, "MaxPool2: spatial size must be at least 2");
  }

  Matrix forward(const Matrix& x) override {
    const int oh = h_ / 2, ow = w_ / 2;
    Matrix y(x.rows(), output_dim());
    argmax_.resize(x.rows(), output_dim());
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      const double* in = x.row(b).data();
      for (int c = 0; c < c_; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            int best = (c * h_ + 2 * oy) * w_ + 2 * ox;
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const int idx = (c * h_ + 2 * oy + dy) * w_ + 2 * ox + dx;
                if (in[idx] > in[best]) best = idx;
              }
            }
            const int o = (c * oh + oy) * ow + ox;
            y(b, o) = in[best];
            argmax_(b, o) = best;
          }
        }
      }
    }
    return y;
  }

  Matrix backward(const Matrix& grad_out) override {
    Matrix dx = Matrix::Zero(grad_out.rows(), input_dim());
    for (Eigen::Index b = 0; b < grad_out.rows(); ++b) {
      for (Eigen::Index o = 0; o < grad_out.cols(); ++o) dx(b, argmax_(b, o)) += grad_out(b, o);
    }
    return dx;
  }

  nlohmann::json describe() const override {
    return {{"type", "maxpool2"}, {"channels", c_}, {"height", h_}, {"width", w_}};
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }
  int input_dim() const override { return c_ * h_ * w_; }
  int output_dim() const override { return c_ * (h_ / 2) * (w_ / 2); }

 private:
  int c_, h_, w_;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax_;
};

inline std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "dense") return std::make_unique<Dense>(j.at("in").get<int>(), j.at("out").get<int>());
  if (type == "relu") return std::make_unique<Relu>(j.at("dim").get<int>());
  if (type == "rownorm") return std::make_unique<RowNorm>(j.at("dim").get<int>());
  if (type == "conv3x3") {
    return std::make_unique<Conv2d>(j.at("in_channels").get<int>(), j.at("out_channels").get<int>(),
                                    j.at("height").get<int>(), j.at("width").get<int>());
  }
  if (type == "maxpool2") {
    return std::make_unique<MaxPool2>(j.at("channels").get<int>(), j.at("height").get<int>(),
                                      j.at("width").get<int>());
  }
  throw InvalidInput("unknown layer type: " + type);
}

// Ordered stack of layers with value semantics (copies deep-clone).
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other) { *this = other; }
  Sequential& operator=(const Sequential& other) {
    if (this == &other) return *this;
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void add(std::unique_ptr<Layer> layer) {
    if (!layers_.empty() && layers_.back()->output_dim() != layer->input_dim()) {
      throw InvalidInput("Sequential: layer dimensions do not chain");
    }
    layers_.push_back(std::move(layer));
  }

  // Appends deep copies of every layer of `other`.
  void append(const Sequential& other) {
    for (const auto& l : other.layers_) add(l->clone());
  }

  Matrix forward(const Matrix& x) {
    Matrix h = x;
    for (auto& l : layers_) h = l->forward(h);
    return h;
  }

  Matrix backward(const Matrix& grad_out) {
    Matrix g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_) {
      for (Parameter* p : l->parameters()) out.push_back(p);
    }
    return out;
  }

  void zero_grad() {
    for (Parameter* p : parameters()) p->zero_grad();
  }

  // He-uniform initialisation of every parameterised layer, in order.
  void initialize(Rng& rng) {
    for (auto& l : layers_) {
      if (auto* d = dynamic_cast<Dense*>(l.get())) d->initialize(rng);
      if (auto* c = dynamic_cast<Conv2d*>(l.get())) c->initialize(rng);
    }
  }

  nlohmann::json describe() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& l : layers_) out.push_back(l->describe());
    return out;
  }

  static Sequential from_json(const nlohmann::json& layers) {
    Sequential s;
    for (const auto& j : layers) s.add(layer_from_json(j));
    return s;
  }

  std::string checksum() const {
    Fnv1a h;
    for (const auto& l : layers_) {
      for (Parameter* p : l->parameters()) h.update(p->value);
    }
    return h.hex();
  }

  int input_dim() const { return layers_.empty() ? 0 : layers_.front()->input_dim(); }
  int output_dim() const { return layers_.empty() ? 0 : layers_.back()->output_dim(); }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Stack of Dense layers with ReLU between them (none after the last).
inline Sequential make_mlp(const std::vector<int>& dims, Rng& rng) {
  require(dims.size() >= 2, "make_mlp: need at least input and output dims");
  Sequential net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    net.add(std::make_unique<Dense>(dims[i], dims[i + 1]));
    if (i + 2 < dims.size()) net.add(std::make_unique<Relu>(dims[i + 1]));
  }
  net.initialize(rng);
  return net;
}

}  // namespace cpa::nn

#endif  // CPA_NN_LAYERS_HPP_
