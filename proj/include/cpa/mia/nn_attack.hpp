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

#ifndef CPA_MIA_NN_ATTACK_HPP_
#define CPA_MIA_NN_ATTACK_HPP_

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/mia/metrics.hpp"
#include "cpa/mia/records.hpp"
#include "cpa/nn/models.hpp"
#include "cpa/training/common.hpp"

namespace cpa::mia {

struct NnAttackConfig {
  int hidden_units = 32;
  int depth = 3;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const NnAttackConfig& c) {
  j = {{"hidden_units", c.hidden_units}, {"depth", c.depth}, {"epochs", c.epochs},
       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, NnAttackConfig& c) {
  NnAttackConfig d;
  c.hidden_units = j.value("hidden_units", d.hidden_units);
  c.depth = j.value("depth", d.depth);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.seed = j.value("seed", d.seed);
}

// Binary member classifier over (top1, top2, correct). Output 1 = member.
struct NnAttack {
  nn::MlpModel model;

  std::vector<double> member_scores(const Matrix& features) {
    const Matrix p = model.predict_proba(features);
    std::vector<double> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) out[static_cast<std::size_t>(r)] = p(r, 1);
    return out;
  }
  std::vector<double> member_scores(const std::vector<PosteriorRecord>& records) {
    return member_scores(feature_matrix(records));
  }
  std::vector<bool> decide(const std::vector<PosteriorRecord>& records) {
    std::vector<bool> out;
    for (double s : member_scores(records)) out.push_back(s > 0.5);
    return out;
  }
};

inline NnAttack train_nn_attack(const Matrix& features, const std::vector<bool>& members,
                                const NnAttackConfig& cfg) {
  if (features.rows() == 0) throw InvalidInput("nn attack: no training records");
  const auto pos = std::count(members.begin(), members.end(), true);
  if (pos == 0 || pos == static_cast<long>(members.size())) {
    throw InvalidInput("nn attack: shadow records must include members and non-members");
  }
  Rng rng(derive_seed(cfg.seed, {stream::kAttack, stream::kInit}));
  NnAttack attack{nn::build_mlp_classifier(static_cast<int>(features.cols()), cfg.hidden_units,
                                           2, cfg.depth, rng)};
  std::vector<int> labels(members.begin(), members.end());
  training::FitOptions fit;
  fit.epochs = cfg.epochs;
  fit.batch_size = cfg.batch_size;
  fit.learning_rate = cfg.learning_rate;
  fit.seed = derive_seed(cfg.seed, {stream::kAttack, stream::kShuffle});
  training::fit_classifier(attack.model, features, labels, fit);
  return attack;
}

// Shadow members come from shadow_train and non-members from shadow_test.
inline NnAttack train_nn_attack(const std::vector<PosteriorRecord>& shadow,
                                const NnAttackConfig& cfg) {
  return train_nn_attack(feature_matrix(shadow), membership(shadow), cfg);
}

inline bool infer_nn_attack(NnAttack& attack, const PosteriorRecord& record) {
  return attack.decide({record}).front();
}

}  // namespace cpa::mia

#endif  // CPA_MIA_NN_ATTACK_HPP_
