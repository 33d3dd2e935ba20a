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

#ifndef CPA_NN_MODELS_HPP_
#define CPA_NN_MODELS_HPP_

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/data/image.hpp"
#include "cpa/nn/layers.hpp"
#include "cpa/nn/losses.hpp"

namespace cpa::nn {

// Architecture of the base encoder.
//
// "small_cnn" is the desk-scale default: conv3x3-relu-maxpool blocks, then a
// dense layer with ReLU to output_dim. "mlp" flattens the image into a
// dense stack (fast, used by tests). "resnet18", "resnet50" and
// "mobilenetv2" select the representation and projection widths those
// backbones use (512/512/256, 2048/256/256, 1280/256/256) on top of the
// convolutional body.
struct ArchSpec {
  std::string kind = "small_cnn";
  int channels = 3;
  int image_size = 16;
  std::vector<int> conv_channels = {8, 16, 32};
  std::vector<int> hidden = {128};
  int output_dim = 128;
  // "l2" rescales every representation to norm sqrt(d); "none" leaves the
  // final ReLU output as is.
  std::string output_norm = "l2";
  // Projection head widths (in, hidden, out); empty means (d, d, d / 2).
  std::vector<int> projection_dims;

  int input_dim() const { return channels * image_size * image_size; }

  // Applies the named-backbone presets; other kinds are returned unchanged.
  ArchSpec resolved() const {
    ArchSpec out = *this;
    if (kind == "resnet18") {
      out.output_dim = 512;
      out.projection_dims = {512, 512, 256};
    } else if (kind == "resnet50") {
      out.output_dim = 2048;
      out.projection_dims = {2048, 256, 256};
    } else if (kind == "mobilenetv2") {
      out.output_dim = 1280;
      out.projection_dims = {1280, 256, 256};
    } else if (kind != "small_cnn" && kind != "mlp") {
      throw InvalidInput("unknown architecture kind: " + kind);
    }
    if (output_norm != "l2" && output_norm != "none") {
      throw InvalidInput("unknown output normalisation: " + output_norm);
    }
    if (out.projection_dims.empty()) {
      out.projection_dims = {out.output_dim, out.output_dim, std::max(1, out.output_dim / 2)};
    }
    return out;
  }
};

inline void to_json(nlohmann::json& j, const ArchSpec& a) {
  j = {{"kind", a.kind},         {"channels", a.channels},   {"image_size", a.image_size},
       {"conv_channels", a.conv_channels}, {"hidden", a.hidden}, {"output_dim", a.output_dim},
       {"projection_dims", a.projection_dims}, {"output_norm", a.output_norm}};
}

inline void from_json(const nlohmann::json& j, ArchSpec& a) {
  ArchSpec d;
  a.kind = j.value("kind", d.kind);
  a.channels = j.value("channels", d.channels);
  a.image_size = j.value("image_size", d.image_size);
  a.conv_channels = j.value("conv_channels", d.conv_channels);
  a.hidden = j.value("hidden", d.hidden);
  a.output_dim = j.value("output_dim", d.output_dim);
  a.projection_dims = j.value("projection_dims", d.projection_dims);
  a.output_norm = j.value("output_norm", d.output_norm);
}

// Base encoder f: images -> representations h.
class Encoder {
 public:
  Encoder() = default;
  Encoder(ArchSpec arch, Sequential net) : arch_(std::move(arch)), net_(std::move(net)) {}

  Matrix forward(const Matrix& x) {
    if (x.cols() != net_.input_dim()) throw InvalidInput("Encoder: input shape mismatch");
    return net_.forward(x);
  }
  Matrix backward(const Matrix& grad) { return net_.backward(grad); }

  // Evaluation-mode encoding in chunks; results do not depend on chunking.
  Matrix encode(const Matrix& x, Eigen::Index chunk = 256) {
    if (x.cols() != net_.input_dim()) throw InvalidInput("Encoder: input shape mismatch");
    Matrix out(x.rows(), output_dim());
    for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
      const Eigen::Index n = std::min(chunk, x.rows() - start);
      out.middleRows(start, n) = net_.forward(x.middleRows(start, n));
    }
    return out;
  }

  Matrix encode(const std::vector<const ImageSample*>& samples) {
    return encode(to_batch(samples));
  }

  int input_dim() const { return net_.input_dim(); }
  int output_dim() const { return net_.output_dim(); }
  const ArchSpec& arch() const { return arch_; }
  Sequential& net() { return net_; }
  const Sequential& net() const { return net_; }
  std::vector<Parameter*> parameters() { return net_.parameters(); }
  std::string checksum() const { return net_.checksum(); }

  void freeze() { frozen_ = true; }
  void unfreeze() { frozen_ = false; }
  bool frozen() const { return frozen_; }

 private:
  ArchSpec arch_;
  Sequential net_;
  bool frozen_ = false;
};

// Dense classifier / projection / attack network: a Sequential with a name
// for its role and helpers for class posteriors.
class MlpModel {
 public:
  MlpModel() = default;
  explicit MlpModel(Sequential net) : net_(std::move(net)) {}

  Matrix forward(const Matrix& x) {
    if (x.cols() != net_.input_dim()) throw InvalidInput("MlpModel: input shape mismatch");
    return net_.forward(x);
  }
  Matrix backward(const Matrix& grad) { return net_.backward(grad); }
  Matrix predict_proba(const Matrix& x) { return softmax(forward(x)); }
  std::vector<int> predict(const Matrix& x) {
    const Matrix p = predict_proba(x);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) out[static_cast<std::size_t>(r)] = argmax_row(p, r);
    return out;
  }

  int input_dim() const { return net_.input_dim(); }
  int output_dim() const { return net_.output_dim(); }
  Sequential& net() { return net_; }
  const Sequential& net() const { return net_; }
  std::vector<Parameter*> parameters() { return net_.parameters(); }
  std::string checksum() const { return net_.checksum(); }

 private:
  Sequential net_;
};

// Projection head g (two dense layers), linear head, and attack networks
// share the MlpModel representation.
using ProjectionHead = MlpModel;
using LinearHead = MlpModel;

inline Encoder build_encoder(const ArchSpec& spec, Rng& rng) {
  const ArchSpec arch = spec.resolved();
  require(arch.channels > 0 && arch.image_size > 0 && arch.output_dim > 0,
          "build_encoder: dimensions must be positive");
  Sequential net;
  if (arch.kind == "mlp") {
    int width = arch.input_dim();
    for (int h : arch.hidden) {
      require(h > 0, "build_encoder: hidden widths must be positive");
      net.add(std::make_unique<Dense>(width, h));
      net.add(std::make_unique<Relu>(h));
      width = h;
    }
    net.add(std::make_unique<Dense>(width, arch.output_dim));
    net.add(std::make_unique<Relu>(arch.output_dim));
  } else {
    int c = arch.channels;
    int size = arch.image_size;
    for (int out : arch.conv_channels) {
      require(out > 0, "build_encoder: conv channel counts must be positive");
      require(size >= 2, "build_encoder: too many pooling stages for the image size");
      net.add(std::make_unique<Conv2d>(c, out, size, size));
      net.add(std::make_unique<Relu>(out * size * size));
      net.add(std::make_unique<MaxPool2>(out, size, size));
      c = out;
      size /= 2;
    }
    const int flat = c * size * size;
    net.add(std::make_unique<Dense>(flat, arch.output_dim));
    net.add(std::make_unique<Relu>(arch.output_dim));
  }
  if (arch.output_norm == "l2") net.add(std::make_unique<RowNorm>(arch.output_dim));
  net.initialize(rng);
  return Encoder(arch, std::move(net));
}

inline ProjectionHead build_projection(const std::vector<int>& dims, Rng& rng) {
  require(dims.size() == 3, "build_projection: expected (input, hidden, output) widths");
  for (int d : dims) require(d > 0, "build_projection: dimensions must be positive");
  return ProjectionHead(make_mlp(dims, rng));
}

inline LinearHead build_linear_head(int dim, int num_classes, Rng& rng) {
  require(dim > 0 && num_classes > 0, "build_linear_head: dimensions must be positive");
  return LinearHead(make_mlp({dim, num_classes}, rng));
}

// Dense classifier with `depth` linear layers: in -> hidden x (depth-1) -> out.
inline MlpModel build_mlp_classifier(int in, int hidden, int out, int depth, Rng& rng) {
  require(depth >= 1, "build_mlp_classifier: depth must be >= 1");
  std::vector<int> dims{in};
  for (int i = 1; i < depth; ++i) dims.push_back(hidden);
  dims.push_back(out);
  return MlpModel(make_mlp(dims, rng));
}

// Posteriors of head(encoder(x)). Rows sum to one.
inline Matrix posteriors(Encoder& encoder, LinearHead& head, const Matrix& x) {
  if (x.cols() != encoder.input_dim()) throw InvalidInput("posteriors: input shape mismatch");
  if (head.input_dim() != encoder.output_dim()) {
    throw InvalidInput("posteriors: head does not match encoder output");
  }
  return softmax(head.forward(encoder.encode(x)));
}

// Encoder plus classification layer, as served to a black-box adversary.
struct Classifier {
  Encoder encoder;
  LinearHead head;
  bool trained = false;

  Matrix posteriors(const Matrix& x) { return nn::posteriors(encoder, head, x); }
  Matrix posteriors(const std::vector<const ImageSample*>& samples) {
    return posteriors(to_batch(samples));
  }
  std::vector<int> predict(const Matrix& x) {
    const Matrix p = posteriors(x);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) out[static_cast<std::size_t>(r)] = argmax_row(p, r);
    return out;
  }
};

}  // namespace cpa::nn

#endif  // CPA_NN_MODELS_HPP_
