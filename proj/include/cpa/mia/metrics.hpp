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

#ifndef CPA_MIA_METRICS_HPP_
#define CPA_MIA_METRICS_HPP_

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/mia/records.hpp"
#include "cpa/nn/losses.hpp"

namespace cpa::mia {

// --- accuracy -----------------------------------------------------------------

// Fraction of correct decisions. The set must hold as many members as
// non-members; use balance_records first.
inline double evaluate_attack(const std::vector<bool>& decisions, const std::vector<bool>& truth) {
  if (decisions.empty()) throw InvalidInput("evaluate_attack: empty evaluation set");
  if (decisions.size() != truth.size()) {
    throw InvalidInput("evaluate_attack: decision/ground-truth count mismatch");
  }
  const auto members = std::count(truth.begin(), truth.end(), true);
  if (2 * static_cast<std::size_t>(members) != truth.size()) {
    throw InvalidInput("evaluate_attack: evaluation set is not balanced");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += decisions[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

inline std::vector<bool> membership(const std::vector<PosteriorRecord>& records) {
  std::vector<bool> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.is_member);
  return out;
}

// (TPR + TNR) / 2; equals plain accuracy on a balanced set.
inline double balanced_accuracy(const std::vector<bool>& decisions, const std::vector<bool>& truth) {
  std::size_t tp = 0, pos = 0, tn = 0, neg = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      ++pos;
      tp += decisions[i];
    } else {
      ++neg;
      tn += !decisions[i];
    }
  }
  if (pos == 0 || neg == 0) throw InvalidInput("balanced_accuracy: need both classes");
  return 0.5 * (static_cast<double>(tp) / pos + static_cast<double>(tn) / neg);
}

// --- NN-attack feature ----------------------------------------------------------

struct MiaFeature {
  double top1 = 0.0;
  double top2 = 0.0;
  double correct = 0.0;
};

inline MiaFeature build_mia_feature(const PosteriorRecord& r) {
  if (r.posteriors.size() < 2) throw InvalidInput("mia feature: need at least 2 classes");
  double top1 = -1.0, top2 = -1.0;
  for (double v : r.posteriors) {
    if (v > top1) {
      top2 = top1;
      top1 = v;
    } else if (v > top2) {
      top2 = v;
    }
  }
  return {top1, top2, r.predicted_label == r.true_label ? 1.0 : 0.0};
}

inline Matrix feature_matrix(const std::vector<PosteriorRecord>& records) {
  Matrix x(static_cast<Eigen::Index>(records.size()), 3);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const MiaFeature f = build_mia_feature(records[i]);
    x.row(static_cast<Eigen::Index>(i)) << f.top1, f.top2, f.correct;
  }
  return x;
}

// --- metric attacks -------------------------------------------------------------

enum class Metric { kCorr, kConf, kEnt, kMent };

inline constexpr std::array<Metric, 3> kCalibratedMetrics = {Metric::kConf, Metric::kEnt,
                                                             Metric::kMent};

inline std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kCorr: return "metric_corr";
    case Metric::kConf: return "metric_conf";
    case Metric::kEnt: return "metric_ent";
    case Metric::kMent: return "metric_ment";
  }
  return "";
}

inline Metric parse_metric(const std::string& name) {
  for (Metric m : {Metric::kCorr, Metric::kConf, Metric::kEnt, Metric::kMent}) {
    if (name == metric_name(m)) return m;
  }
  throw InvalidInput("unknown metric: " + name);
}

// Confidence: higher means member. Entropies: lower means member.
inline bool higher_is_member(Metric m) { return m == Metric::kConf || m == Metric::kCorr; }

inline double metric_value(const PosteriorRecord& r, Metric m) {
  switch (m) {
    case Metric::kCorr: return r.predicted_label == r.true_label ? 1.0 : 0.0;
    case Metric::kConf: return r.p_true();
    case Metric::kEnt: return nn::entropy(r.posteriors);
    case Metric::kMent: return nn::modified_entropy(r.posteriors, r.true_label);
  }
  return 0.0;
}

inline bool threshold_decision(double value, double threshold, bool higher) {
  return higher ? value >= threshold : value <= threshold;
}

inline bool metric_corr(const PosteriorRecord& r) { return r.predicted_label == r.true_label; }

struct AttackThresholds {
  // metric name -> class -> threshold.
  std::map<std::string, std::map<int, double>> per_class;
  std::map<std::string, double> global;
  // Human-readable notes on fallbacks and degenerate classes.
  std::vector<std::string> flags;

  double threshold(Metric m, int cls) const {
    const auto it = per_class.find(metric_name(m));
    if (it == per_class.end()) {
      throw CalibrationError("no thresholds calibrated for " + metric_name(m));
    }
    const auto jt = it->second.find(cls);
    if (jt == it->second.end()) {
      throw CalibrationError("no " + metric_name(m) + " threshold for class " +
                             std::to_string(cls));
    }
    return jt->second;
  }
};

inline void to_json(nlohmann::json& j, const AttackThresholds& t) {
  j = nlohmann::json::object();
  for (const auto& [metric, classes] : t.per_class) {
    nlohmann::json c = nlohmann::json::object();
    for (const auto& [cls, v] : classes) c[std::to_string(cls)] = v;
    j[metric] = c;
  }
  j["_global"] = t.global;
  j["_flags"] = t.flags;
}

inline void from_json(const nlohmann::json& j, AttackThresholds& t) {
  t = {};
  for (const auto& [key, value] : j.items()) {
    if (key == "_global") {
      t.global = value.get<std::map<std::string, double>>();
    } else if (key == "_flags") {
      t.flags = value.get<std::vector<std::string>>();
    } else {
      for (const auto& [cls, v] : value.items()) t.per_class[key][std::stoi(cls)] = v.get<double>();
    }
  }
}

inline bool metric_decision(const PosteriorRecord& r, Metric m, const AttackThresholds& t) {
  if (m == Metric::kCorr) return metric_corr(r);
  return threshold_decision(metric_value(r, m), t.threshold(m, r.true_label), higher_is_member(m));
}

inline bool metric_conf(const PosteriorRecord& r, const AttackThresholds& t) {
  return metric_decision(r, Metric::kConf, t);
}
inline bool metric_ent(const PosteriorRecord& r, const AttackThresholds& t) {
  return metric_decision(r, Metric::kEnt, t);
}
inline bool metric_ment(const PosteriorRecord& r, const AttackThresholds& t) {
  return metric_decision(r, Metric::kMent, t);
}

inline std::vector<bool> metric_decisions(const std::vector<PosteriorRecord>& records, Metric m,
                                          const AttackThresholds& t) {
  std::vector<bool> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(metric_decision(r, m, t));
  return out;
}

// --- threshold calibration ------------------------------------------------------

struct ThresholdFit {
  double threshold = 0.0;
  double balanced_accuracy = 0.5;
  bool degenerate = false;
};

// Scans every observed value as a cut and keeps the one with the best
// balanced accuracy (first in scan order on ties). The returned threshold
// sits halfway to the next observed value on the non-member side, which
// gives the same decisions on the calibration data.
inline ThresholdFit calibrate_threshold(const std::vector<double>& values,
                                        const std::vector<bool>& members, bool higher) {
  if (values.size() != members.size() || values.empty()) {
    throw InvalidInput("calibrate_threshold: need matching, non-empty values and labels");
  }
  ThresholdFit fit;
  if (values.size() == 1) {
    fit.threshold = values[0];
    fit.degenerate = true;
    return fit;
  }
  const auto pos = static_cast<std::size_t>(std::count(members.begin(), members.end(), true));
  const std::size_t neg = members.size() - pos;
  if (pos == 0 || neg == 0) {
    throw InvalidInput("calibrate_threshold: need both members and non-members");
  }

  // Sort so that "member side first": descending when higher is member.
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return higher ? values[a] > values[b] : values[a] < values[b];
  });
  // Cutting after position i classifies order[0..i] as members.
  std::size_t tp = 0, fp = 0;
  double best = -1.0;
  std::size_t best_end = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double v = values[order[i]];
    std::size_t j = i;
    for (; j < order.size() && values[order[j]] == v; ++j) {
      if (members[order[j]]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    const double acc = 0.5 * (static_cast<double>(tp) / pos +
                              static_cast<double>(neg - fp) / neg);
    if (acc > best) {
      best = acc;
      best_end = j;
    }
    i = j;
  }
  const double cut = values[order[best_end - 1]];
  fit.threshold = cut;
  if (best_end < order.size()) {
    const double next = values[order[best_end]];
    const double mid = 0.5 * (cut + next);
    // Adjacent doubles have no midpoint; it would round onto one of them.
    if (mid != next) fit.threshold = mid;
  }
  fit.balanced_accuracy = best;
  return fit;
}

// Per-class thresholds for each calibrated metric. Classes without both
// members and non-members fall back to the metric's global threshold; a
// class with a single record takes that record's value. Both are flagged.
inline AttackThresholds calibrate_thresholds(const std::vector<PosteriorRecord>& shadow,
                                             int num_classes) {
  require(num_classes >= 1, "calibrate_thresholds: need at least one class");
  if (shadow.empty()) throw InvalidInput("calibrate_thresholds: no shadow records");
  AttackThresholds t;
  const std::vector<bool> all_members = membership(shadow);
  for (Metric m : kCalibratedMetrics) {
    const std::string name = metric_name(m);
    std::vector<double> all_values;
    all_values.reserve(shadow.size());
    for (const auto& r : shadow) all_values.push_back(metric_value(r, m));
    const ThresholdFit global = calibrate_threshold(all_values, all_members, higher_is_member(m));
    t.global[name] = global.threshold;

    for (int c = 0; c < num_classes; ++c) {
      std::vector<double> values;
      std::vector<bool> members;
      for (std::size_t i = 0; i < shadow.size(); ++i) {
        if (shadow[i].true_label != c) continue;
        values.push_back(all_values[i]);
        members.push_back(all_members[i]);
      }
      const auto pos = std::count(members.begin(), members.end(), true);
      const std::string tag = name + " class " + std::to_string(c);
      if (values.size() == 1) {
        t.per_class[name][c] = values[0];
        t.flags.push_back(tag + ": single shadow record, threshold is its value");
      } else if (values.empty() || pos == 0 || pos == static_cast<long>(values.size())) {
        t.per_class[name][c] = global.threshold;
        t.flags.push_back(tag + ": no usable shadow records, global threshold used");
      } else {
        t.per_class[name][c] = calibrate_threshold(values, members, higher_is_member(m)).threshold;
      }
    }
  }
  return t;
}

}  // namespace cpa::mia

#endif  // CPA_MIA_METRICS_HPP_
