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

#ifndef CPA_TRAINING_SUPERVISED_HPP_
#define CPA_TRAINING_SUPERVISED_HPP_

#include "cpa/data/dataset.hpp"
#include "cpa/nn/optim.hpp"
#include "cpa/training/common.hpp"

namespace cpa::training {

// End-to-end cross-entropy training of encoder + classification layer.
inline TrainHistory train_supervised(nn::Classifier& model, const SampleRefs& train,
                                     const TrainConfig& cfg) {
  cfg.validate(false);
  if (train.empty()) throw InvalidInput("train_supervised: empty training partition");
  if (model.encoder.frozen()) throw ContractViolation("train_supervised: encoder is frozen");

  Stopwatch clock;
  TrainHistory history;
  const Matrix x = to_batch(train);
  const std::vector<int> y = task_labels(train);

  nn::Adam enc_opt(model.encoder.parameters(), {.learning_rate = cfg.learning_rate});
  nn::Adam head_opt(model.head.parameters(), {.learning_rate = cfg.learning_rate});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, {stream::kShuffle, static_cast<std::uint64_t>(epoch)}));
    double total_loss = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : make_batches(train.size(), cfg.batch_size, rng)) {
      const Matrix xb = gather_rows(x, batch);
      const std::vector<int> yb = gather(y, batch);
      model.encoder.net().zero_grad();
      model.head.net().zero_grad();
      const Matrix logits = model.head.forward(model.encoder.forward(xb));
      const nn::LossAndGrad lg = nn::softmax_cross_entropy(logits, yb);
      model.encoder.backward(model.head.backward(lg.grad));
      enc_opt.step();
      head_opt.step();
      total_loss += lg.loss * static_cast<double>(batch.size());
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        correct += nn::argmax_row(logits, r) == yb[static_cast<std::size_t>(r)];
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = "supervised";
    rec.loss = total_loss / static_cast<double>(train.size());
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    history.epochs.push_back(std::move(rec));
  }
  model.trained = true;
  history.final_checksums = {{"encoder", model.encoder.checksum()},
                             {"head", model.head.checksum()}};
  history.wall_clock_seconds = clock.seconds();
  return history;
}

inline TrainHistory train_supervised(nn::Classifier& model, const DatasetBundle& bundle,
                                     const TrainConfig& cfg,
                                     Partition partition = Partition::kTargetTrain) {
  return train_supervised(model, bundle.partition(partition), cfg);
}

}  // namespace cpa::training

#endif  // CPA_TRAINING_SUPERVISED_HPP_
