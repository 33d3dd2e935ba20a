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

#ifndef CPA_DEFENSES_OLYMPUS_HPP_
#define CPA_DEFENSES_OLYMPUS_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/rng.hpp"
#include "cpa/nn/models.hpp"
#include "cpa/training/common.hpp"

namespace cpa::defenses {

struct OlympusConfig {
  std::vector<int> encoder_widths = {256, 128};
  std::vector<int> decoder_widths = {256};
  // Weight of the adversary's attribute loss subtracted from the task loss.
  double adversarial_weight = 1.0;
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int adversary_hidden_units = 64;
  int adversary_depth = 3;
  double adversary_learning_rate = 1e-3;
  // Adversary updates per batch before the stack update.
  int adversary_steps = 1;
  // Caps each sample's attribute loss at the chance level log(A).
  bool cap_adversary_loss = true;
  std::uint64_t seed = 0;

  void validate() const {
    require(!encoder_widths.empty(), "olympus: the autoencoder needs a code layer");
    for (int w : encoder_widths) require(w > 0, "olympus: widths must be positive");
    for (int w : decoder_widths) require(w > 0, "olympus: widths must be positive");
    require(adversarial_weight >= 0.0, "olympus: adversarial weight must be non-negative");
    require(epochs >= 0 && batch_size >= 1 && learning_rate > 0.0 &&
                adversary_learning_rate > 0.0,
            "olympus: invalid schedule");
    require(adversary_hidden_units >= 1 && adversary_depth >= 1 && adversary_steps >= 1,
            "olympus: invalid adversary shape");
  }
};

inline void to_json(nlohmann::json& j, const OlympusConfig& c) {
  j = {{"encoder_widths", c.encoder_widths},
       {"decoder_widths", c.decoder_widths},
       {"adversarial_weight", c.adversarial_weight},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"adversary_hidden_units", c.adversary_hidden_units},
       {"adversary_depth", c.adversary_depth},
       {"adversary_learning_rate", c.adversary_learning_rate},
       {"adversary_steps", c.adversary_steps},
       {"cap_adversary_loss", c.cap_adversary_loss},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, OlympusConfig& c) {
  OlympusConfig d;
  c.encoder_widths = j.value("encoder_widths", d.encoder_widths);
  c.decoder_widths = j.value("decoder_widths", d.decoder_widths);
  c.adversarial_weight = j.value("adversarial_weight", d.adversarial_weight);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.adversary_hidden_units = j.value("adversary_hidden_units", d.adversary_hidden_units);
  c.adversary_depth = j.value("adversary_depth", d.adversary_depth);
  c.adversary_learning_rate = j.value("adversary_learning_rate", d.adversary_learning_rate);
  c.adversary_steps = j.value("adversary_steps", d.adversary_steps);
  c.cap_adversary_loss = j.value("cap_adversary_loss", d.cap_adversary_loss);
  c.seed = j.value("seed", d.seed);
}

// d -> encoder widths -> decoder widths -> d. When the base encoder
// normalises its rows, the autoencoder output is normalised the same way.
inline nn::Sequential build_autoencoder(int dim, const OlympusConfig& cfg, bool row_norm,
                                        Rng& rng) {
  cfg.validate();
  std::vector<int> dims{dim};
  dims.insert(dims.end(), cfg.encoder_widths.begin(), cfg.encoder_widths.end());
  dims.insert(dims.end(), cfg.decoder_widths.begin(), cfg.decoder_widths.end());
  dims.push_back(dim);
  nn::Sequential net = nn::make_mlp(dims, rng);
  if (row_norm) net.add(std::make_unique<nn::RowNorm>(dim));
  return net;
}

namespace detail {

// Mean over samples of min(cross-entropy, cap). Samples the adversary
// already gets wrong at chance level contribute no gradient, so the stack
// gains nothing by making the attribute decodable with flipped labels.
inline nn::LossAndGrad capped_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                            double cap) {
  const Matrix p = nn::softmax(logits);
  nn::LossAndGrad out;
  out.grad = Matrix::Zero(p.rows(), p.cols());
  const double inv = 1.0 / static_cast<double>(labels.size());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    const double ce = -std::log(std::max(p(r, y), kLogClamp));
    if (ce >= cap) {
      out.loss += cap * inv;
      continue;
    }
    out.loss += ce * inv;
    out.grad.row(r) = p.row(r) * inv;
    out.grad(r, y) -= inv;
  }
  return out;
}

}  // namespace detail

struct OlympusStack {
  nn::Encoder base;
  nn::MlpModel autoencoder;
  nn::LinearHead head;
  nn::MlpModel adversary;

  // The defended model as served: base encoder followed by the autoencoder,
  // then the classification layer.
  nn::Classifier defended_model() const {
    nn::Sequential net = base.net();
    net.append(autoencoder.net());
    nn::Classifier out;
    out.encoder = nn::Encoder(base.arch(), std::move(net));
    out.head = head;
    out.trained = true;
    return out;
  }
};

struct OlympusResult {
  nn::Classifier model;
  training::TrainHistory history;
};

// Inserts an autoencoder between the encoder and the classification layer
// of a trained model and fine-tunes everything on the original training
// samples: per batch the adversary first fits the current perturbed
// representations, then the stack minimises task loss minus the weighted
// adversary loss.
inline OlympusResult olympus_finetune(const nn::Classifier& trained,
                                      const training::SampleRefs& train,
                                      const OlympusConfig& cfg) {
  cfg.validate();
  if (!trained.trained) throw ContractViolation("olympus: the model must be trained first");
  if (train.empty()) throw InvalidInput("olympus: no training samples");
  const int d = trained.encoder.output_dim();
  if (trained.head.input_dim() != d) {
    throw InvalidInput("olympus: classification layer does not match the encoder");
  }
  const std::vector<int> s = training::sensitive_labels(train);
  int num_attributes = 0;
  for (int v : s) num_attributes = std::max(num_attributes, v + 1);
  require(num_attributes >= 2, "olympus: need at least two attribute values");

  const double chance_loss = cfg.cap_adversary_loss
                                 ? std::log(static_cast<double>(num_attributes))
                                 : std::numeric_limits<double>::infinity();

  Rng init(derive_seed(cfg.seed, {stream::kDefense, stream::kInit}));
  OlympusStack stack{trained.encoder,
                     nn::MlpModel(build_autoencoder(d, cfg, trained.encoder.arch().output_norm ==
                                                               "l2",
                                                    init)),
                     trained.head,
                     nn::build_mlp_classifier(d, cfg.adversary_hidden_units, num_attributes,
                                              cfg.adversary_depth, init)};
  stack.base.unfreeze();

  std::vector<nn::Parameter*> params = stack.base.parameters();
  for (nn::Parameter* p : stack.autoencoder.parameters()) params.push_back(p);
  for (nn::Parameter* p : stack.head.parameters()) params.push_back(p);
  nn::Adam opt(params, {.learning_rate = cfg.learning_rate});
  nn::Adam adv_opt(stack.adversary.parameters(), {.learning_rate = cfg.adversary_learning_rate});

  training::Stopwatch clock;
  training::TrainHistory history;
  const Matrix x = to_batch(train);
  const std::vector<int> y = training::task_labels(train);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, {stream::kDefense, stream::kShuffle,
                                   static_cast<std::uint64_t>(epoch)}));
    double task_total = 0.0, adv_total = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : training::make_batches(train.size(), cfg.batch_size, rng)) {
      const Matrix xb = training::gather_rows(x, batch);
      const std::vector<int> yb = training::gather(y, batch);
      const std::vector<int> sb = training::gather(s, batch);

      for (nn::Parameter* p : params) p->zero_grad();
      const Matrix a = stack.autoencoder.forward(stack.base.forward(xb));

      for (int k = 0; k < cfg.adversary_steps; ++k) {
        stack.adversary.net().zero_grad();
        const nn::LossAndGrad fit = nn::softmax_cross_entropy(stack.adversary.forward(a), sb);
        stack.adversary.backward(fit.grad);
        adv_opt.step();
      }

      const Matrix logits = stack.head.forward(a);
      const nn::LossAndGrad task = nn::softmax_cross_entropy(logits, yb);
      Matrix grad_a = stack.head.backward(task.grad);
      const nn::LossAndGrad adv =
          detail::capped_cross_entropy(stack.adversary.forward(a), sb, chance_loss);
      grad_a -= cfg.adversarial_weight * stack.adversary.backward(adv.grad);
      stack.base.backward(stack.autoencoder.backward(grad_a));
      opt.step();

      task_total += task.loss * static_cast<double>(batch.size());
      adv_total += adv.loss * static_cast<double>(batch.size());
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        correct += nn::argmax_row(logits, r) == yb[static_cast<std::size_t>(r)];
      }
    }
    training::EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = "olympus";
    rec.loss = (task_total - cfg.adversarial_weight * adv_total) / static_cast<double>(train.size());
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    rec.extra["task_loss"] = task_total / static_cast<double>(train.size());
    rec.extra["adversary_loss"] = adv_total / static_cast<double>(train.size());
    history.epochs.push_back(std::move(rec));
  }
  OlympusResult out{stack.defended_model(), std::move(history)};
  out.history.final_checksums = {{"encoder", out.model.encoder.checksum()},
                                 {"head", out.model.head.checksum()},
                                 {"adversary", stack.adversary.checksum()}};
  out.history.wall_clock_seconds = clock.seconds();
  return out;
}

}  // namespace cpa::defenses

#endif  // CPA_DEFENSES_OLYMPUS_HPP_
