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

#ifndef CPA_AIA_ATTACK_HPP_
#define CPA_AIA_ATTACK_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/aia/records.hpp"
#include "cpa/nn/models.hpp"
#include "cpa/training/common.hpp"

namespace cpa::aia {

struct AttrAttackConfig {
  int hidden_units = 128;
  int depth = 3;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.01;
  // Plain SGD; set false for Adam.
  bool use_sgd = true;
  // Share of the attack training records actually used.
  double train_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(hidden_units >= 1 && depth >= 1, "attribute attack: invalid architecture");
    require(epochs >= 0 && batch_size >= 1 && learning_rate > 0.0,
            "attribute attack: invalid schedule");
    require(train_fraction > 0.0 && train_fraction <= 1.0,
            "attribute attack: train_fraction must lie in (0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const AttrAttackConfig& c) {
  j = {{"hidden_units", c.hidden_units}, {"depth", c.depth},
       {"epochs", c.epochs},             {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate}, {"optimizer", c.use_sgd ? "sgd" : "adam"},
       {"train_fraction", c.train_fraction}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, AttrAttackConfig& c) {
  AttrAttackConfig d;
  c.hidden_units = j.value("hidden_units", d.hidden_units);
  c.depth = j.value("depth", d.depth);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  const std::string opt = j.value("optimizer", std::string(d.use_sgd ? "sgd" : "adam"));
  if (opt != "sgd" && opt != "adam") throw InvalidInput("unknown optimizer: " + opt);
  c.use_sgd = opt == "sgd";
  c.train_fraction = j.value("train_fraction", d.train_fraction);
  c.seed = j.value("seed", d.seed);
}

struct AttrAttackModel {
  nn::MlpModel model;
  int num_attributes = 0;

  Matrix posteriors(const Matrix& h) { return model.predict_proba(h); }
  std::vector<int> predict(const Matrix& h) { return model.predict(h); }
};

inline int count_attributes(const std::vector<RepresentationRecord>& records) {
  int k = 0;
  for (const auto& r : records) k = std::max(k, r.sensitive_label + 1);
  return k;
}

// Untrained attack network with the configured shape.
inline AttrAttackModel build_attr_attack(int dim, int num_attributes, const AttrAttackConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, {stream::kAttack, stream::kInit}));
  return {nn::build_mlp_classifier(dim, cfg.hidden_units, num_attributes, cfg.depth, rng),
          num_attributes};
}

// Trains `initial` in place of a freshly built network when given.
inline AttrAttackModel train_attr_attack(const std::vector<RepresentationRecord>& records,
                                         const AttrAttackConfig& cfg,
                                         std::optional<AttrAttackModel> initial = std::nullopt) {
  cfg.validate();
  const std::vector<RepresentationRecord> used =
      cfg.train_fraction < 1.0 ? subsample_records(records, cfg.train_fraction, cfg.seed) : records;
  std::set<int> values;
  for (const auto& r : used) values.insert(r.sensitive_label);
  if (values.size() < 2) {
    throw InvalidInput("attribute attack: training records need at least two attribute values");
  }
  const Matrix x = representation_matrix(used);
  AttrAttackModel attack =
      initial ? std::move(*initial)
              : build_attr_attack(static_cast<int>(x.cols()), count_attributes(used), cfg);
  if (attack.model.input_dim() != x.cols() || attack.num_attributes < count_attributes(used)) {
    throw InvalidInput("attribute attack: initial model does not fit the records");
  }
  training::FitOptions fit;
  fit.epochs = cfg.epochs;
  fit.batch_size = cfg.batch_size;
  fit.learning_rate = cfg.learning_rate;
  fit.use_sgd = cfg.use_sgd;
  fit.seed = derive_seed(cfg.seed, {stream::kAttack, stream::kShuffle});
  training::fit_classifier(attack.model, x, attribute_labels(used), fit);
  return attack;
}

inline int infer_attr(AttrAttackModel& attack, const std::vector<double>& h) {
  Matrix x(1, static_cast<Eigen::Index>(h.size()));
  for (std::size_t c = 0; c < h.size(); ++c) x(0, static_cast<Eigen::Index>(c)) = h[c];
  return attack.predict(x).front();
}

inline double evaluate_attr(AttrAttackModel& attack,
                            const std::vector<RepresentationRecord>& records) {
  if (records.empty()) throw InvalidInput("evaluate_attr: no test records");
  const std::vector<int> predicted = attack.predict(representation_matrix(records));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    correct += predicted[i] == records[i].sensitive_label;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

// Accuracy of always answering the most frequent attribute value.
inline double majority_baseline(const std::vector<int>& labels) {
  if (labels.empty()) throw InvalidInput("majority_baseline: no records");
  std::map<int, std::size_t> counts;
  for (int s : labels) ++counts[s];
  std::size_t best = 0;
  for (const auto& [value, count] : counts) best = std::max(best, count);
  return static_cast<double>(best) / static_cast<double>(labels.size());
}

inline double majority_baseline(const std::vector<RepresentationRecord>& records) {
  return majority_baseline(attribute_labels(records));
}

// One attack per depth, all under the same seed.
inline std::map<int, double> attack_depth_sweep(const std::vector<RepresentationRecord>& train,
                                                const std::vector<RepresentationRecord>& test,
                                                const std::vector<int>& depths,
                                                const AttrAttackConfig& cfg) {
  std::map<int, double> out;
  for (int depth : depths) {
    AttrAttackConfig c = cfg;
    c.depth = depth;
    AttrAttackModel attack = train_attr_attack(train, c);
    out[depth] = evaluate_attr(attack, test);
  }
  return out;
}

struct AttrResult {
  double accuracy = 0.0;
  double majority_baseline = 0.0;
  std::size_t train_records = 0;
  std::size_t test_records = 0;
};

inline void to_json(nlohmann::json& j, const AttrResult& r) {
  j = {{"accuracy", r.accuracy},
       {"majority_baseline", r.majority_baseline},
       {"train_records", r.train_records},
       {"test_records", r.test_records}};
}

inline void from_json(const nlohmann::json& j, AttrResult& r) {
  r.accuracy = j.at("accuracy").get<double>();
  r.majority_baseline = j.at("majority_baseline").get<double>();
  r.train_records = j.at("train_records").get<std::size_t>();
  r.test_records = j.at("test_records").get<std::size_t>();
}

// Trains on data.train and evaluates on data.test.
inline AttrResult run_attr_attack(const AttrDataset& data, const AttrAttackConfig& cfg) {
  AttrAttackModel attack = train_attr_attack(data.train, cfg);
  AttrResult r;
  r.accuracy = evaluate_attr(attack, data.test);
  r.majority_baseline = majority_baseline(data.test);
  r.train_records = cfg.train_fraction < 1.0
                        ? static_cast<std::size_t>(std::floor(cfg.train_fraction * data.train.size()))
                        : data.train.size();
  r.test_records = data.test.size();
  return r;
}

}  // namespace cpa::aia

#endif  // CPA_AIA_ATTACK_HPP_
