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

#ifndef CPA_TRAINING_COMMON_HPP_
#define CPA_TRAINING_COMMON_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/data/image.hpp"
#include "cpa/nn/losses.hpp"
#include "cpa/nn/models.hpp"
#include "cpa/nn/optim.hpp"

namespace cpa::training {

using SampleRefs = std::vector<const ImageSample*>;

// Optimisation settings shared by every regime. Optimiser is Adam.
struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate(bool contrastive) const {
    require(epochs >= 0, "epochs must be non-negative");
    require(batch_size >= 1, "batch size must be positive");
    require(learning_rate > 0.0, "learning rate must be positive");
    if (contrastive) require(batch_size >= 2, "contrastive batches need at least 2 samples");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
       {"optimizer", "adam"}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.seed = j.value("seed", d.seed);
}

struct EpochRecord {
  int epoch = 0;
  std::string phase;
  double loss = 0.0;
  // NaN when the phase has no accuracy (contrastive updates).
  double accuracy = std::nan("");
  std::map<std::string, double> extra;
  std::map<std::string, std::string> checksums;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::map<std::string, std::string> final_checksums;
  double wall_clock_seconds = 0.0;
};

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch}, {"phase", r.phase}, {"loss", r.loss}, {"checksums", r.checksums}};
  j["accuracy"] = std::isnan(r.accuracy) ? nlohmann::json(nullptr) : nlohmann::json(r.accuracy);
  if (!r.extra.empty()) j["extra"] = r.extra;
}

inline void from_json(const nlohmann::json& j, EpochRecord& r) {
  r.epoch = j.at("epoch").get<int>();
  r.phase = j.at("phase").get<std::string>();
  r.loss = j.at("loss").get<double>();
  r.accuracy = j.at("accuracy").is_null() ? std::nan("") : j.at("accuracy").get<double>();
  r.checksums = j.value("checksums", std::map<std::string, std::string>{});
  r.extra = j.value("extra", std::map<std::string, double>{});
}

inline void to_json(nlohmann::json& j, const TrainHistory& h) {
  j = {{"epochs", h.epochs},
       {"final_checksums", h.final_checksums},
       {"wall_clock_seconds", h.wall_clock_seconds}};
}

inline void from_json(const nlohmann::json& j, TrainHistory& h) {
  h.epochs = j.at("epochs").get<std::vector<EpochRecord>>();
  h.final_checksums = j.value("final_checksums", std::map<std::string, std::string>{});
  h.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Shuffled mini-batches of indices into [0, n). Batches shorter than
// `min_batch` (only ever the last one) are dropped.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                          Rng& rng, std::size_t min_batch = 1) {
  const auto order = rng.permutation(n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    if (end - start < min_batch) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

inline std::vector<int> task_labels(const SampleRefs& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const ImageSample* s : samples) out.push_back(s->task_label);
  return out;
}

inline std::vector<int> sensitive_labels(const SampleRefs& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const ImageSample* s : samples) {
    if (!s->sensitive_label) throw InvalidInput("sample is missing its sensitive label");
    out.push_back(*s->sensitive_label);
  }
  return out;
}

inline double accuracy(const Matrix& scores, const std::vector<int>& labels) {
  require(static_cast<std::size_t>(scores.rows()) == labels.size(), "accuracy: size mismatch");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    correct += nn::argmax_row(scores, r) == labels[static_cast<std::size_t>(r)];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

inline double classifier_accuracy(nn::Classifier& model, const SampleRefs& samples) {
  if (samples.empty()) return 0.0;
  return accuracy(model.posteriors(samples), task_labels(samples));
}

// Train accuracy minus test accuracy.
inline double overfitting_level(double train_accuracy, double test_accuracy) {
  require(train_accuracy >= 0.0 && train_accuracy <= 1.0 && test_accuracy >= 0.0 &&
              test_accuracy <= 1.0,
          "overfitting_level: accuracies must lie in [0, 1]");
  return train_accuracy - test_accuracy;
}

// Rows of `source` selected by `index`.
inline Matrix gather_rows(const Matrix& source, const std::vector<std::size_t>& index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), source.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = source.row(static_cast<Eigen::Index>(index[i]));
  }
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& source, const std::vector<std::size_t>& index) {
  std::vector<T> out;
  out.reserve(index.size());
  for (std::size_t i : index) out.push_back(source[i]);
  return out;
}

// Generic supervised fit of a dense network on fixed feature rows. Used for
// heads on frozen representations and for every attack/adversary model.
struct FitOptions {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-3;
  bool use_sgd = false;
  std::uint64_t seed = 0;
};

inline std::vector<double> fit_classifier(nn::MlpModel& model, const Matrix& features,
                                          const std::vector<int>& labels,
                                          const FitOptions& opt) {
  require(static_cast<std::size_t>(features.rows()) == labels.size(),
          "fit_classifier: feature/label count mismatch");
  require(opt.epochs >= 0 && opt.batch_size >= 1, "fit_classifier: invalid schedule");
  std::vector<double> losses;
  if (labels.empty() || opt.epochs == 0) return losses;
  nn::Adam adam(model.parameters(), {.learning_rate = opt.learning_rate});
  nn::Sgd sgd(model.parameters(), opt.learning_rate);
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    Rng rng(derive_seed(opt.seed, {stream::kShuffle, static_cast<std::uint64_t>(epoch)}));
    double total = 0.0;
    for (const auto& batch : make_batches(labels.size(), opt.batch_size, rng)) {
      const Matrix x = gather_rows(features, batch);
      const std::vector<int> y = gather(labels, batch);
      model.net().zero_grad();
      const nn::LossAndGrad lg = nn::softmax_cross_entropy(model.forward(x), y);
      model.backward(lg.grad);
      if (opt.use_sgd) {
        sgd.step();
      } else {
        adam.step();
      }
      total += lg.loss * static_cast<double>(batch.size());
    }
    losses.push_back(total / static_cast<double>(labels.size()));
  }
  return losses;
}

}  // namespace cpa::training

#endif  // CPA_TRAINING_COMMON_HPP_
