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

#ifndef CPA_DEFENSES_MEMGUARD_HPP_
#define CPA_DEFENSES_MEMGUARD_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/rng.hpp"
#include "cpa/defenses/output.hpp"
#include "cpa/mia/metrics.hpp"
#include "cpa/mia/nn_attack.hpp"
#include "cpa/mia/records.hpp"

namespace cpa::defenses {

struct MemGuardConfig {
  // Largest allowed L1 distance between original and defended posteriors.
  double budget = 1.0;
  int max_steps = 100;
  // Initial step length in logit space; halved after every rejected step.
  double step_size = 0.5;
  // Phase II: probability that the noise is actually added.
  double apply_probability = 1.0;
  // Stop once the surrogate score is this close to 0.5.
  double tolerance = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    require(budget >= 0.0, "memguard: budget must be non-negative");
    require(max_steps >= 0 && step_size > 0.0 && tolerance >= 0.0,
            "memguard: invalid search settings");
    require(apply_probability >= 0.0 && apply_probability <= 1.0,
            "memguard: apply probability must lie in [0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const MemGuardConfig& c) {
  j = {{"budget", c.budget},         {"max_steps", c.max_steps},
       {"step_size", c.step_size},   {"apply_probability", c.apply_probability},
       {"tolerance", c.tolerance},   {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, MemGuardConfig& c) {
  MemGuardConfig d;
  c.budget = j.value("budget", d.budget);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.step_size = j.value("step_size", d.step_size);
  c.apply_probability = j.value("apply_probability", d.apply_probability);
  c.tolerance = j.value("tolerance", d.tolerance);
  c.seed = j.value("seed", d.seed);
}

// The defender's own membership classifier: same feature and training as the
// NN attack, with the 3-layer, 64-unit adversary shape. Members are the
// target model's training records and non-members its held-out records.
inline mia::NnAttack train_memguard_surrogate(const std::vector<mia::PosteriorRecord>& records,
                                              std::uint64_t seed) {
  mia::NnAttackConfig cfg;
  cfg.hidden_units = 64;
  cfg.depth = 3;
  cfg.seed = derive_seed(seed, {stream::kDefense});
  return mia::train_nn_attack(records, cfg);
}

namespace detail {

struct SurrogateScore {
  double score = 0.5;
  std::vector<double> grad_p;
};

// Surrogate member probability and its gradient w.r.t. the posteriors (only
// the top-1 and top-2 entries feed the feature).
inline SurrogateScore surrogate_score(mia::NnAttack& surrogate, const std::vector<double>& p,
                                      int true_label) {
  const mia::MiaFeature f = mia::build_mia_feature(mia::make_record(p, true_label, false));
  Matrix x(1, 3);
  x << f.top1, f.top2, f.correct;
  const Matrix q = nn::softmax(surrogate.model.forward(x));
  SurrogateScore out;
  out.score = q(0, 1);
  // d(q1)/d(logits) = q0 q1 (-1, 1); backpropagate to the feature.
  Matrix g(1, 2);
  g << -q(0, 0) * q(0, 1), q(0, 0) * q(0, 1);
  const Matrix gx = surrogate.model.backward(g);
  surrogate.model.net().zero_grad();
  int i1 = -1, i2 = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int k = static_cast<int>(i);
    if (i1 < 0 || p[i] > p[static_cast<std::size_t>(i1)]) {
      i2 = i1;
      i1 = k;
    } else if (i2 < 0 || p[i] > p[static_cast<std::size_t>(i2)]) {
      i2 = k;
    }
  }
  out.grad_p.assign(p.size(), 0.0);
  out.grad_p[static_cast<std::size_t>(i1)] += gx(0, 0);
  out.grad_p[static_cast<std::size_t>(i2)] += gx(0, 1);
  return out;
}

inline std::vector<double> softmax_vector(const RowVector& z) {
  Matrix m = z;
  return as_vector(nn::softmax(m).row(0));
}

inline double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

}  // namespace detail

// Moves the surrogate membership score of one posterior vector toward 0.5.
// The search runs on logits, so every candidate is a probability vector;
// candidates that change the predicted label or exceed the L1 budget are
// rejected. The result is never further from 0.5 than the input.
inline DefendedOutput memguard_defend(const mia::PosteriorRecord& record,
                                      mia::NnAttack& surrogate, const MemGuardConfig& cfg,
                                      Rng& rng) {
  cfg.validate();
  mia::validate(record);
  DefendedOutput out;
  out.kind = OutputKind::kPerturbedPosteriors;
  out.defense_name = "memguard";
  out.payload = record.posteriors;
  const std::vector<double>& p0 = record.posteriors;
  const int label = record.predicted_label;

  const detail::SurrogateScore start = detail::surrogate_score(surrogate, p0, record.true_label);
  out.metadata["score_before"] = start.score;
  out.metadata["score_after"] = start.score;
  out.metadata["l1"] = 0.0;
  // Phase II decides up front, so the RNG stream does not depend on the search.
  const bool apply = rng.bernoulli(cfg.apply_probability);
  if (std::abs(start.score - 0.5) <= cfg.tolerance) return out;

  RowVector z(static_cast<Eigen::Index>(p0.size()));
  for (std::size_t i = 0; i < p0.size(); ++i) {
    z(static_cast<Eigen::Index>(i)) = std::log(std::max(p0[i], kLogClamp));
  }
  std::vector<double> best = p0;
  double best_gap = std::abs(start.score - 0.5);
  RowVector e = RowVector::Zero(z.size());
  double step = cfg.step_size;
  std::vector<double> current = p0;
  detail::SurrogateScore s = start;
  bool accepted_any = false;
  bool flat = false;
  for (int it = 0; it < cfg.max_steps && best_gap > cfg.tolerance; ++it) {
    // Gradient of (score - 0.5)^2 through the softmax.
    const double scale = 2.0 * (s.score - 0.5);
    double dot = 0.0;
    for (std::size_t i = 0; i < current.size(); ++i) dot += current[i] * s.grad_p[i];
    RowVector grad(z.size());
    for (std::size_t i = 0; i < current.size(); ++i) {
      grad(static_cast<Eigen::Index>(i)) = scale * current[i] * (s.grad_p[i] - dot);
    }
    const double norm = grad.norm();
    if (norm == 0.0) {
      flat = !accepted_any;
      break;
    }
    const RowVector trial = e - step * grad / norm;
    const std::vector<double> candidate = detail::softmax_vector(z + trial);
    const bool keeps_label = nn::argmax(candidate) == label;
    if (!keeps_label || detail::l1_distance(candidate, p0) > cfg.budget) {
      step *= 0.5;
      continue;
    }
    const detail::SurrogateScore next =
        detail::surrogate_score(surrogate, candidate, record.true_label);
    if (std::abs(next.score - 0.5) >= std::abs(s.score - 0.5)) {
      step *= 0.5;
      continue;
    }
    e = trial;
    current = candidate;
    s = next;
    accepted_any = true;
    if (std::abs(s.score - 0.5) < best_gap) {
      best_gap = std::abs(s.score - 0.5);
      best = current;
    }
  }
  if (!accepted_any) {
    out.flagged = true;
    out.note = flat ? "surrogate score is flat at this input"
                    : "no label-preserving noise within budget";
    return out;
  }
  if (!apply) {
    out.note = "phase II skipped";
    return out;
  }
  out.payload = best;
  out.metadata["score_after"] = detail::surrogate_score(surrogate, best, record.true_label).score;
  out.metadata["l1"] = detail::l1_distance(best, p0);
  return out;
}

inline std::vector<DefendedOutput> memguard_defend(const std::vector<mia::PosteriorRecord>& records,
                                                   mia::NnAttack& surrogate,
                                                   const MemGuardConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {stream::kDefense}));
  std::vector<DefendedOutput> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(memguard_defend(r, surrogate, cfg, rng));
  return out;
}

// Records as the adversary sees them after the defense.
inline std::vector<mia::PosteriorRecord> defended_records(
    const std::vector<mia::PosteriorRecord>& records, const std::vector<DefendedOutput>& outputs) {
  require(records.size() == outputs.size(), "defended_records: one output per record");
  std::vector<mia::PosteriorRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back(mia::make_record(outputs[i].payload, records[i].true_label, records[i].is_member));
  }
  return out;
}

}  // namespace cpa::defenses

#endif  // CPA_DEFENSES_MEMGUARD_HPP_
