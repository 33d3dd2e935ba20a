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

#ifndef CPA_TRAINING_CONTRASTIVE_HPP_
#define CPA_TRAINING_CONTRASTIVE_HPP_

#include <algorithm>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/data/augment.hpp"
#include "cpa/data/dataset.hpp"
#include "cpa/nn/optim.hpp"
#include "cpa/training/common.hpp"

namespace cpa::training {

struct ContrastiveConfig {
  double temperature = 0.5;
  AugmentationConfig augmentation;
  // Number of samples in the fixed batch used to track the loss.
  int probe_size = 64;

  void validate() const {
    require(temperature > 0.0, "contrastive: temperature must be positive");
    require(probe_size >= 1, "contrastive: probe size must be positive");
    augmentation.validate();
  }
};

inline void to_json(nlohmann::json& j, const ContrastiveConfig& c) {
  const auto& a = c.augmentation;
  j = {{"temperature", c.temperature},
       {"probe_size", c.probe_size},
       {"augmentation",
        {{"crop_scale_min", a.crop_scale_min},
         {"crop_scale_max", a.crop_scale_max},
         {"flip_probability", a.flip_probability},
         {"color_jitter_strength", a.color_jitter_strength},
         {"blur_kernel_fraction", a.blur_kernel_fraction},
         {"blur_probability", a.blur_probability},
         {"output_size", a.output_size}}}};
}

inline void from_json(const nlohmann::json& j, ContrastiveConfig& c) {
  ContrastiveConfig d;
  c.temperature = j.value("temperature", d.temperature);
  c.probe_size = j.value("probe_size", d.probe_size);
  c.augmentation = d.augmentation;
  if (j.contains("augmentation")) {
    const auto& a = j.at("augmentation");
    auto& o = c.augmentation;
    o.crop_scale_min = a.value("crop_scale_min", o.crop_scale_min);
    o.crop_scale_max = a.value("crop_scale_max", o.crop_scale_max);
    o.flip_probability = a.value("flip_probability", o.flip_probability);
    o.color_jitter_strength = a.value("color_jitter_strength", o.color_jitter_strength);
    o.blur_kernel_fraction = a.value("blur_kernel_fraction", o.blur_kernel_fraction);
    o.blur_probability = a.value("blur_probability", o.blur_probability);
    o.output_size = a.value("output_size", o.output_size);
  }
}

// A batch of 2N augmented views, the two views of sample k at rows 2k and
// 2k+1. `sensitive` is filled only when every source carries the attribute.
struct ViewBatch {
  Matrix x;
  std::vector<int> sensitive;
};

inline ViewBatch make_view_batch(const SampleRefs& samples, const std::vector<std::size_t>& batch,
                                 const AugmentationConfig& cfg, Rng& rng) {
  std::vector<ImageSample> views;
  views.reserve(2 * batch.size());
  bool all_sensitive = true;
  for (std::size_t idx : batch) {
    auto [a, b] = augment_pair(*samples[idx], cfg, rng);
    all_sensitive = all_sensitive && a.sensitive_label.has_value();
    views.push_back(std::move(a));
    views.push_back(std::move(b));
  }
  ViewBatch out;
  out.x = to_batch(std::span<const ImageSample>(views));
  if (all_sensitive) {
    for (const auto& v : views) out.sensitive.push_back(*v.sensitive_label);
  }
  return out;
}

// Fixed probe batch: the first `probe_size` samples of a seeded order with a
// seeded pair of views each. Independent of the training streams.
inline Matrix make_probe_batch(const SampleRefs& samples, const ContrastiveConfig& cc,
                               std::uint64_t seed) {
  Rng order_rng(derive_seed(seed, {stream::kAugment, 0, 0}));
  auto order = order_rng.permutation(samples.size());
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(cc.probe_size)));
  Rng view_rng(derive_seed(seed, {stream::kAugment, 0, 1}));
  return make_view_batch(samples, order, cc.augmentation, view_rng).x;
}

inline double probe_loss(nn::Encoder& encoder, nn::ProjectionHead& projection,
                         const Matrix& probe, double tau) {
  return nn::contrastive_batch_loss(projection.forward(encoder.encode(probe)), tau);
}

// Optimiser state for the encoder/projection pair, kept across epochs.
struct ContrastiveOptimizers {
  nn::Adam encoder;
  nn::Adam projection;

  ContrastiveOptimizers(nn::Encoder& f, nn::ProjectionHead& g, double lr)
      : encoder(f.parameters(), {.learning_rate = lr}),
        projection(g.parameters(), {.learning_rate = lr}) {}
};

// Per-batch hook on the encoder output. Given h and the batch, it may add a
// term to dL/dh and returns a scalar to be logged.
using RepresentationHook = std::function<double(const Matrix& h, const ViewBatch& views,
                                                Matrix& grad_h)>;

struct ContrastivePassResult {
  double loss = 0.0;
  double hook_value = 0.0;
};

// One pass over `samples` updating f and g with the NT-Xent loss. `pass`
// selects the shuffle and augmentation streams, so the same pass number
// reproduces the same batches.
inline ContrastivePassResult contrastive_pass(nn::Encoder& f, nn::ProjectionHead& g,
                                              ContrastiveOptimizers& opt,
                                              const SampleRefs& samples, const TrainConfig& cfg,
                                              const ContrastiveConfig& cc, int pass,
                                              const RepresentationHook& hook = {}) {
  const auto p = static_cast<std::uint64_t>(pass);
  Rng shuffle(derive_seed(cfg.seed, {stream::kShuffle, p}));
  Rng augment(derive_seed(cfg.seed, {stream::kAugment, p}));
  ContrastivePassResult result;
  std::size_t batches = 0;
  for (const auto& batch : make_batches(samples.size(), cfg.batch_size, shuffle, 2)) {
    const ViewBatch views = make_view_batch(samples, batch, cc.augmentation, augment);
    f.net().zero_grad();
    g.net().zero_grad();
    const Matrix h = f.forward(views.x);
    const nn::LossAndGrad lg = nn::contrastive_loss_and_grad(g.forward(h), cc.temperature);
    Matrix grad_h = g.backward(lg.grad);
    if (hook) result.hook_value += hook(h, views, grad_h);
    f.backward(grad_h);
    opt.encoder.step();
    opt.projection.step();
    result.loss += lg.loss;
    ++batches;
  }
  if (batches > 0) {
    result.loss /= static_cast<double>(batches);
    result.hook_value /= static_cast<double>(batches);
  }
  return result;
}

// Phase one: train f and g with the contrastive loss on unlabeled images.
// Any corpus can be passed, including an external pretraining set. The
// projection head is not used after this call.
inline TrainHistory pretrain_encoder(nn::Encoder& encoder, nn::ProjectionHead& projection,
                                     const SampleRefs& samples, const TrainConfig& cfg,
                                     const ContrastiveConfig& cc) {
  cfg.validate(true);
  cc.validate();
  if (samples.size() < 2) throw InvalidInput("pretrain_encoder: need at least 2 samples");
  if (encoder.frozen()) throw ContractViolation("pretrain_encoder: encoder is frozen");
  Stopwatch clock;
  TrainHistory history;
  const Matrix probe = make_probe_batch(samples, cc, cfg.seed);
  ContrastiveOptimizers opt(encoder, projection, cfg.learning_rate);

  EpochRecord initial;
  initial.epoch = 0;
  initial.phase = "initial";
  initial.loss = probe_loss(encoder, projection, probe, cc.temperature);
  initial.checksums = {{"encoder", encoder.checksum()}, {"projection", projection.checksum()}};
  history.epochs.push_back(initial);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const ContrastivePassResult r =
        contrastive_pass(encoder, projection, opt, samples, cfg, cc, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = "contrastive";
    rec.loss = probe_loss(encoder, projection, probe, cc.temperature);
    rec.extra["batch_loss"] = r.loss;
    rec.checksums = {{"encoder", encoder.checksum()}, {"projection", projection.checksum()}};
    history.epochs.push_back(std::move(rec));
  }
  history.final_checksums = {{"encoder", encoder.checksum()},
                             {"projection", projection.checksum()}};
  history.wall_clock_seconds = clock.seconds();
  return history;
}

// Phase two: fit the classification layer on frozen representations.
inline TrainHistory finetune_linear_head(nn::Encoder& encoder, nn::LinearHead& head,
                                         const SampleRefs& train, const TrainConfig& cfg) {
  cfg.validate(false);
  if (!encoder.frozen()) {
    throw ContractViolation("finetune_linear_head: encoder must be frozen");
  }
  if (train.empty()) throw InvalidInput("finetune_linear_head: empty training partition");
  if (head.input_dim() != encoder.output_dim()) {
    throw InvalidInput("finetune_linear_head: head does not match encoder output");
  }
  Stopwatch clock;
  TrainHistory history;
  const std::string before = encoder.checksum();
  const Matrix h = encoder.encode(train);
  const std::vector<int> y = task_labels(train);
  FitOptions fit;
  fit.epochs = cfg.epochs;
  fit.batch_size = cfg.batch_size;
  fit.learning_rate = cfg.learning_rate;
  fit.seed = derive_seed(cfg.seed, {stream::kHead});
  const std::vector<double> losses = fit_classifier(head, h, y, fit);
  for (std::size_t e = 0; e < losses.size(); ++e) {
    EpochRecord rec;
    rec.epoch = static_cast<int>(e) + 1;
    rec.phase = "linear_head";
    rec.loss = losses[e];
    history.epochs.push_back(std::move(rec));
  }
  if (!history.epochs.empty()) history.epochs.back().accuracy = accuracy(head.forward(h), y);
  if (encoder.checksum() != before) {
    throw ContractViolation("finetune_linear_head: encoder weights changed");
  }
  history.final_checksums = {{"encoder", before}, {"head", head.checksum()}};
  history.wall_clock_seconds = clock.seconds();
  return history;
}

// Full two-phase run on the target-train partition.
inline std::pair<TrainHistory, TrainHistory> train_contrastive(
    nn::Classifier& model, nn::ProjectionHead& projection, const SampleRefs& train,
    const TrainConfig& pretrain_cfg, const TrainConfig& head_cfg, const ContrastiveConfig& cc) {
  TrainHistory pre = pretrain_encoder(model.encoder, projection, train, pretrain_cfg, cc);
  model.encoder.freeze();
  TrainHistory head = finetune_linear_head(model.encoder, model.head, train, head_cfg);
  model.trained = true;
  return {std::move(pre), std::move(head)};
}

}  // namespace cpa::training

#endif  // CPA_TRAINING_CONTRASTIVE_HPP_
