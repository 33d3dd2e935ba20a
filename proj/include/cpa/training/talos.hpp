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

#ifndef CPA_TRAINING_TALOS_HPP_
#define CPA_TRAINING_TALOS_HPP_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/nn/optim.hpp"
#include "cpa/training/common.hpp"
#include "cpa/training/contrastive.hpp"

namespace cpa::training {

struct TalosConfig {
  double adversarial_factor = 1.0;
  int adversary_hidden_units = 64;
  int adversary_depth = 3;
  double adversary_learning_rate = 1e-3;
  // Epochs are numbered from 1. Epochs with this parity train only the
  // adversary; the others train the encoder and projection.
  int adversary_parity = 1;

  void validate() const {
    require(adversarial_factor >= 0.0, "talos: adversarial factor must be non-negative");
    require(adversary_hidden_units >= 1, "talos: adversary hidden units must be positive");
    require(adversary_depth >= 1, "talos: adversary depth must be positive");
    require(adversary_learning_rate > 0.0, "talos: adversary learning rate must be positive");
    require(adversary_parity == 0 || adversary_parity == 1, "talos: parity must be 0 or 1");
  }

  bool adversary_epoch(int epoch) const { return epoch % 2 == adversary_parity; }
};

inline void to_json(nlohmann::json& j, const TalosConfig& c) {
  j = {{"adversarial_factor", c.adversarial_factor},
       {"adversary_hidden_units", c.adversary_hidden_units},
       {"adversary_depth", c.adversary_depth},
       {"adversary_learning_rate", c.adversary_learning_rate},
       {"alternation", c.adversary_parity == 1 ? "odd_adversary" : "even_adversary"}};
}

inline void from_json(const nlohmann::json& j, TalosConfig& c) {
  TalosConfig d;
  c.adversarial_factor = j.value("adversarial_factor", d.adversarial_factor);
  c.adversary_hidden_units = j.value("adversary_hidden_units", d.adversary_hidden_units);
  c.adversary_depth = j.value("adversary_depth", d.adversary_depth);
  c.adversary_learning_rate = j.value("adversary_learning_rate", d.adversary_learning_rate);
  const std::string alt = j.value("alternation", std::string("odd_adversary"));
  if (alt == "odd_adversary") {
    c.adversary_parity = 1;
  } else if (alt == "even_adversary") {
    c.adversary_parity = 0;
  } else {
    throw InvalidInput("talos: unknown alternation '" + alt + "'");
  }
}

using AdversarialClassifier = nn::MlpModel;

inline AdversarialClassifier build_adversary(int input_dim, int num_attributes,
                                             const TalosConfig& cfg, Rng& rng) {
  cfg.validate();
  return nn::build_mlp_classifier(input_dim, cfg.adversary_hidden_units, num_attributes,
                                  cfg.adversary_depth, rng);
}

// Identity on the forward pass; scales the gradient by -lambda going back.
struct GradientReversal {
  double lambda = 1.0;

  Matrix forward(const Matrix& x) const { return x; }
  Matrix backward(const Matrix& upstream) const { return -lambda * upstream; }
};

inline Matrix gradient_reversal(const Matrix& upstream, double lambda) {
  return GradientReversal{lambda}.backward(upstream);
}

// Mean attribute cross-entropy of C over the 2N views with representations
// `h`; labels are per view. The gradient is w.r.t. h (C's own parameter
// gradients accumulate as a side effect).
inline nn::LossAndGrad adversarial_classifier_loss_and_grad(AdversarialClassifier& adversary,
                                                            const Matrix& h,
                                                            const std::vector<int>& sensitive) {
  if (sensitive.size() != static_cast<std::size_t>(h.rows())) {
    throw InvalidInput("adversarial loss: every view needs a sensitive label");
  }
  const nn::LossAndGrad ce = nn::softmax_cross_entropy(adversary.forward(h), sensitive);
  return {ce.loss, adversary.backward(ce.grad)};
}

inline double adversarial_classifier_loss(AdversarialClassifier& adversary,
                                          nn::Encoder& encoder, const ViewBatch& views) {
  if (views.sensitive.size() != static_cast<std::size_t>(views.x.rows())) {
    throw InvalidInput("adversarial loss: views are missing sensitive labels");
  }
  const Matrix p = nn::softmax(adversary.forward(encoder.encode(views.x)));
  double total = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    total += nn::cross_entropy(views.sensitive[static_cast<std::size_t>(r)],
                               std::span<const double>(p.row(r).data(),
                                                       static_cast<std::size_t>(p.cols())));
  }
  return total / static_cast<double>(p.rows());
}

// L_contrastive(g(h)) - lambda * L_C(C(h)) and its gradient w.r.t. h. The
// adversary branch passes through a gradient reversal layer.
inline nn::LossAndGrad talos_objective(nn::ProjectionHead& projection,
                                       AdversarialClassifier& adversary, const Matrix& h,
                                       const std::vector<int>& sensitive, double tau,
                                       double lambda) {
  const nn::LossAndGrad con = nn::contrastive_loss_and_grad(projection.forward(h), tau);
  Matrix grad = projection.backward(con.grad);
  const GradientReversal grl{lambda};
  const nn::LossAndGrad adv =
      adversarial_classifier_loss_and_grad(adversary, grl.forward(h), sensitive);
  grad += grl.backward(adv.grad);
  return {con.loss - lambda * adv.loss, grad};
}

struct TalosModels {
  nn::Encoder& encoder;
  nn::ProjectionHead& projection;
  AdversarialClassifier& adversary;
};

// Alternating adversarial censoring. Adversary epochs train C on detached
// representations of fresh views; the other epochs run a contrastive pass
// with the reversed adversary gradient added at the encoder output. The k-th
// encoder epoch reuses the batches of contrastive pretraining epoch k.
inline TrainHistory train_talos(TalosModels m, const SampleRefs& samples,
                                const TrainConfig& cfg, const ContrastiveConfig& cc,
                                const TalosConfig& tc) {
  cfg.validate(true);
  cc.validate();
  tc.validate();
  if (samples.size() < 2) throw InvalidInput("train_talos: need at least 2 samples");
  if (m.encoder.frozen()) throw ContractViolation("train_talos: encoder is frozen");
  for (const ImageSample* s : samples) {
    if (!s->sensitive_label) throw InvalidInput("train_talos: sensitive labels are required");
  }
  if (m.adversary.input_dim() != m.encoder.output_dim()) {
    throw InvalidInput("train_talos: adversary must take the encoder output");
  }

  Stopwatch clock;
  TrainHistory history;
  ContrastiveOptimizers opt(m.encoder, m.projection, cfg.learning_rate);
  nn::Adam adversary_opt(m.adversary.parameters(), {.learning_rate = tc.adversary_learning_rate});
  const double lambda = tc.adversarial_factor;
  int encoder_passes = 0;

  const RepresentationHook censor = [&](const Matrix& h, const ViewBatch& views, Matrix& grad_h) {
    const nn::LossAndGrad adv = adversarial_classifier_loss_and_grad(m.adversary, h, views.sensitive);
    grad_h += gradient_reversal(adv.grad, lambda);
    return adv.loss;
  };

  auto checksums = [&] {
    return std::map<std::string, std::string>{{"encoder", m.encoder.checksum()},
                                              {"projection", m.projection.checksum()},
                                              {"adversary", m.adversary.checksum()}};
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    if (tc.adversary_epoch(epoch)) {
      rec.phase = "adversary";
      const auto e = static_cast<std::uint64_t>(epoch);
      Rng shuffle(derive_seed(cfg.seed, {stream::kAdversary, stream::kShuffle, e}));
      Rng augment(derive_seed(cfg.seed, {stream::kAdversary, stream::kAugment, e}));
      double total = 0.0;
      std::size_t correct = 0;
      std::size_t seen = 0;
      std::size_t batches = 0;
      for (const auto& batch : make_batches(samples.size(), cfg.batch_size, shuffle, 2)) {
        const ViewBatch views = make_view_batch(samples, batch, cc.augmentation, augment);
        const Matrix h = m.encoder.encode(views.x);
        m.adversary.net().zero_grad();
        const Matrix logits = m.adversary.forward(h);
        const nn::LossAndGrad ce = nn::softmax_cross_entropy(logits, views.sensitive);
        m.adversary.backward(ce.grad);
        adversary_opt.step();
        total += ce.loss;
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
          correct += nn::argmax_row(logits, r) == views.sensitive[static_cast<std::size_t>(r)];
        }
        seen += static_cast<std::size_t>(logits.rows());
        ++batches;
      }
      rec.loss = batches > 0 ? total / static_cast<double>(batches) : 0.0;
      rec.accuracy = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    } else {
      rec.phase = "encoder";
      ++encoder_passes;
      const ContrastivePassResult r = contrastive_pass(m.encoder, m.projection, opt, samples, cfg,
                                                       cc, encoder_passes, censor);
      rec.loss = r.loss - lambda * r.hook_value;
      rec.extra["contrastive_loss"] = r.loss;
      rec.extra["adversary_loss"] = r.hook_value;
    }
    rec.checksums = checksums();
    history.epochs.push_back(std::move(rec));
  }
  history.final_checksums = checksums();
  history.wall_clock_seconds = clock.seconds();
  return history;
}

}  // namespace cpa::training

#endif  // CPA_TRAINING_TALOS_HPP_
