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

#ifndef CPA_MIA_SUITE_HPP_
#define CPA_MIA_SUITE_HPP_

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/mia/label_only.hpp"
#include "cpa/mia/metrics.hpp"
#include "cpa/mia/nn_attack.hpp"
#include "cpa/mia/records.hpp"

namespace cpa::mia {

inline const std::vector<std::string>& posterior_attack_names() {
  static const std::vector<std::string> names = {"nn", "metric_corr", "metric_conf", "metric_ent",
                                                 "metric_ment"};
  return names;
}

struct MiaResults {
  std::map<std::string, double> accuracy;
  AttackThresholds thresholds;
  std::size_t eval_members = 0;
  std::size_t eval_nonmembers = 0;
};

inline void to_json(nlohmann::json& j, const MiaResults& r) {
  j = {{"accuracy", r.accuracy},
       {"thresholds", r.thresholds},
       {"eval_members", r.eval_members},
       {"eval_nonmembers", r.eval_nonmembers}};
}

// Attacks that only need posterior records. Shadow records calibrate and
// train; target records are balanced and evaluated.
inline MiaResults run_posterior_attacks(const std::vector<PosteriorRecord>& shadow,
                                        const std::vector<PosteriorRecord>& target,
                                        int num_classes, const std::vector<std::string>& attacks,
                                        const NnAttackConfig& nn_cfg, std::uint64_t seed) {
  MiaResults out;
  if (attacks.empty()) return out;
  const std::vector<PosteriorRecord> eval = balance_records(target, seed);
  const std::vector<bool> truth = membership(eval);
  out.eval_members = count_members(eval);
  out.eval_nonmembers = eval.size() - out.eval_members;
  bool calibrated = false;
  for (const std::string& name : attacks) {
    if (name == "nn") {
      NnAttack attack = train_nn_attack(shadow, nn_cfg);
      out.accuracy[name] = evaluate_attack(attack.decide(eval), truth);
    } else if (name == "metric_corr" || name == "metric_conf" || name == "metric_ent" ||
               name == "metric_ment") {
      if (!calibrated && name != "metric_corr") {
        out.thresholds = calibrate_thresholds(shadow, num_classes);
        calibrated = true;
      }
      out.accuracy[name] = evaluate_attack(metric_decisions(eval, parse_metric(name),
                                                            out.thresholds),
                                           truth);
    } else {
      throw InvalidInput("unknown posterior attack: " + name);
    }
  }
  return out;
}

inline nlohmann::json attack_report(const std::map<std::string, double>& accuracy) {
  return nlohmann::json(accuracy);
}

}  // namespace cpa::mia

#endif  // CPA_MIA_SUITE_HPP_
