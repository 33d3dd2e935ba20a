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

#ifndef CPA_DEFENSES_ATTRIGUARD_HPP_
#define CPA_DEFENSES_ATTRIGUARD_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/aia/attack.hpp"
#include "cpa/aia/records.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/defenses/output.hpp"

namespace cpa::defenses {

struct AttriGuardConfig {
  // L-infinity bound on the representation perturbation.
  double bound = 0.5;
  int steps = 50;
  // Zero means bound / 10.
  double step_size = 0.0;
  // Required logit margin of the target value.
  double confidence = 0.0;
  // Phase II sampling weights per attribute value; empty means uniform.
  std::vector<double> distribution;
  std::uint64_t seed = 0;

  double effective_step() const { return step_size > 0.0 ? step_size : bound / 10.0; }

  void validate() const {
    require(bound >= 0.0, "attriguard: bound must be non-negative");
    require(steps >= 0 && step_size >= 0.0 && confidence >= 0.0,
            "attriguard: invalid search settings");
    for (double w : distribution) require(w >= 0.0, "attriguard: weights must be non-negative");
  }
};

inline void to_json(nlohmann::json& j, const AttriGuardConfig& c) {
  j = {{"bound", c.bound},           {"steps", c.steps},
       {"step_size", c.step_size},   {"confidence", c.confidence},
       {"distribution", c.distribution}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, AttriGuardConfig& c) {
  AttriGuardConfig d;
  c.bound = j.value("bound", d.bound);
  c.steps = j.value("steps", d.steps);
  c.step_size = j.value("step_size", d.step_size);
  c.confidence = j.value("confidence", d.confidence);
  c.distribution = j.value("distribution", d.distribution);
  c.seed = j.value("seed", d.seed);
}

// The defender's attribute classifier, trained on its own representations
// with the 3-layer, 64-unit adversary shape.
inline aia::AttrAttackModel train_attriguard_surrogate(
    const std::vector<aia::RepresentationRecord>& records, std::uint64_t seed) {
  aia::AttrAttackConfig cfg;
  cfg.hidden_units = 64;
  cfg.depth = 3;
  cfg.use_sgd = false;
  cfg.learning_rate = 1e-3;
  cfg.seed = derive_seed(seed, {stream::kDefense});
  return aia::train_attr_attack(records, cfg);
}

// Projection onto the L-infinity ball around h, exact in floating point:
// (x - h) computed afterwards never exceeds the bound.
inline RowVector project_linf(RowVector x, const RowVector& h, double bound) {
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    x(c) = std::clamp(x(c), h(c) - bound, h(c) + bound);
    while (x(c) - h(c) > bound) x(c) = std::nextafter(x(c), h(c));
    while (h(c) - x(c) > bound) x(c) = std::nextafter(x(c), h(c));
  }
  return x;
}

struct EvasionResult {
  RowVector representation;
  bool success = false;
};

// Projected sign-gradient descent on the margin max_{j != t} z_j - z_t,
// keeping |delta|_inf <= bound after every step.
inline EvasionResult evade_to(aia::AttrAttackModel& surrogate, const RowVector& h, int target,
                              const AttriGuardConfig& cfg) {
  const double step = cfg.effective_step();
  RowVector delta = RowVector::Zero(h.size());
  auto margin_of = [&](const Matrix& logits, int& runner_up) {
    runner_up = -1;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (c == target) continue;
      if (runner_up < 0 || logits(0, c) > logits(0, runner_up)) runner_up = static_cast<int>(c);
    }
    return logits(0, runner_up) - logits(0, target);
  };
  for (int it = 0;; ++it) {
    Matrix x = h + delta;
    const Matrix logits = surrogate.model.forward(x);
    int runner_up = 0;
    const double margin = margin_of(logits, runner_up);
    if (margin < -cfg.confidence || it == cfg.steps || step == 0.0) {
      EvasionResult out{project_linf(h + delta, h, cfg.bound), false};
      out.success = surrogate.predict(Matrix(out.representation)).front() == target;
      return out;
    }
    Matrix g = Matrix::Zero(1, logits.cols());
    g(0, runner_up) = 1.0;
    g(0, target) = -1.0;
    const Matrix gx = surrogate.model.backward(g);
    surrogate.model.net().zero_grad();
    for (Eigen::Index c = 0; c < delta.size(); ++c) {
      const double s = gx(0, c) > 0.0 ? 1.0 : (gx(0, c) < 0.0 ? -1.0 : 0.0);
      delta(c) = std::clamp(delta(c) - step * s, -cfg.bound, cfg.bound);
    }
  }
}

// Phase I finds one bounded adversarial representation per attribute value;
// phase II samples a value among the successful ones and returns its
// representation. Values whose search failed are excluded and noted.
inline DefendedOutput attriguard_defend(const std::vector<double>& representation,
                                        aia::AttrAttackModel& surrogate,
                                        const AttriGuardConfig& cfg, Rng& rng) {
  cfg.validate();
  const int k = surrogate.num_attributes;
  require(k >= 2, "attriguard: surrogate needs at least two attribute values");
  require(static_cast<int>(representation.size()) == surrogate.model.input_dim(),
          "attriguard: representation does not match the surrogate");
  if (!cfg.distribution.empty()) {
    require(static_cast<int>(cfg.distribution.size()) == k,
            "attriguard: one sampling weight per attribute value");
  }
  const RowVector h = as_row(representation);
  std::vector<EvasionResult> found;
  std::vector<double> weights;
  DefendedOutput out;
  out.kind = OutputKind::kPerturbedRepresentation;
  out.defense_name = "attriguard";
  out.payload = representation;
  for (int t = 0; t < k; ++t) {
    found.push_back(evade_to(surrogate, h, t, cfg));
    const double w = cfg.distribution.empty() ? 1.0 : cfg.distribution[static_cast<std::size_t>(t)];
    weights.push_back(found.back().success ? w : 0.0);
    if (!found.back().success) out.note += "value " + std::to_string(t) + " unreachable; ";
  }
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = rng.uniform();
  if (total <= 0.0) {
    out.flagged = true;
    out.note += "no attribute value reachable";
    return out;
  }
  int chosen = k - 1;
  double acc = 0.0;
  for (int t = 0; t < k; ++t) {
    acc += weights[static_cast<std::size_t>(t)] / total;
    if (u < acc && weights[static_cast<std::size_t>(t)] > 0.0) {
      chosen = t;
      break;
    }
  }
  while (weights[static_cast<std::size_t>(chosen)] <= 0.0) --chosen;
  out.payload = as_vector(found[static_cast<std::size_t>(chosen)].representation);
  out.metadata["sampled_value"] = chosen;
  out.metadata["linf"] = (found[static_cast<std::size_t>(chosen)].representation - h)
                             .cwiseAbs()
                             .maxCoeff();
  return out;
}

inline std::vector<DefendedOutput> attriguard_defend(
    const std::vector<aia::RepresentationRecord>& records, aia::AttrAttackModel& surrogate,
    const AttriGuardConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {stream::kDefense}));
  std::vector<DefendedOutput> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(attriguard_defend(r.representation, surrogate, cfg, rng));
  return out;
}

inline std::vector<aia::RepresentationRecord> defended_representations(
    const std::vector<aia::RepresentationRecord>& records,
    const std::vector<DefendedOutput>& outputs) {
  require(records.size() == outputs.size(), "defended_representations: one output per record");
  std::vector<aia::RepresentationRecord> out = records;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].representation = outputs[i].payload;
  return out;
}

}  // namespace cpa::defenses

#endif  // CPA_DEFENSES_ATTRIGUARD_HPP_
