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

#ifndef CPA_HARNESS_SWEEP_HPP_
#define CPA_HARNESS_SWEEP_HPP_

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/harness/pipeline.hpp"

namespace cpa::harness {

inline const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> v = {"lambda", "train_fraction", "attack_depth",
                                             "num_posteriors", "head_epochs"};
  return v;
}

// These only change what happens after the models are trained.
inline bool attack_only_parameter(const std::string& p) {
  return p == "train_fraction" || p == "attack_depth" || p == "num_posteriors";
}

inline int as_count(double v, const std::string& parameter) {
  if (v != std::floor(v) || v < 0) {
    throw InvalidInput(parameter + " takes non-negative integers");
  }
  return static_cast<int>(v);
}

inline ExperimentConfig with_parameter(ExperimentConfig cfg, const std::string& parameter,
                                       double value) {
  if (parameter == "lambda") {
    cfg.talos.adversarial_factor = value;
  } else if (parameter == "train_fraction") {
    cfg.attribute.train_fraction = value;
  } else if (parameter == "attack_depth") {
    cfg.attribute.depth = as_count(value, parameter);
  } else if (parameter == "num_posteriors") {
    cfg.num_posteriors = as_count(value, parameter);
  } else if (parameter == "head_epochs") {
    cfg.head.epochs = as_count(value, parameter);
  } else {
    throw InvalidInput("unsupported sweep parameter: " + parameter);
  }
  return cfg;
}

inline std::string value_label(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  AuditReport report;
};

inline void to_json(nlohmann::json& j, const SweepRow& r) {
  j = {{"parameter", r.parameter}, {"value", r.value}, {"report", r.report}};
}

inline void from_json(const nlohmann::json& j, SweepRow& r) {
  r.parameter = j.at("parameter").get<std::string>();
  r.value = j.at("value").get<double>();
  r.report = j.at("report").get<AuditReport>();
}

// One report per value, all sharing the base seeds. Each run writes to
// <output_dir>/<parameter>=<value>.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& parameter,
                                   const std::vector<double>& values) {
  const auto& known = sweep_parameters();
  if (std::find(known.begin(), known.end(), parameter) == known.end()) {
    throw InvalidInput("unsupported sweep parameter: " + parameter);
  }
  std::vector<ExperimentConfig> configs;
  for (double v : values) {
    ExperimentConfig c = with_parameter(base, parameter, v);
    if (!base.output_dir.empty()) {
      c.output_dir =
          (std::filesystem::path(base.output_dir) / (parameter + "=" + value_label(v))).string();
    }
    c.validate();
    configs.push_back(std::move(c));
  }
  std::vector<SweepRow> rows;
  if (!attack_only_parameter(parameter) || configs.empty()) {
    for (std::size_t i = 0; i < configs.size(); ++i) {
      rows.push_back({parameter, values[i], run_audit(configs[i])});
    }
    return rows;
  }
  // Models do not depend on the parameter: train once, attack per value.
  std::string stage;
  const ArtifactStore shared(base.output_dir.empty()
                                 ? std::filesystem::path()
                                 : std::filesystem::path(base.output_dir) / "shared");
  PreparedRun run;
  try {
    run = prepare_run(configs.front(), shared, stage);
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const ArtifactStore store(configs[i].output_dir);
    AuditReport report = begin_report(configs[i]);
    try {
      rows.push_back({parameter, values[i], assess_run(configs[i], run, store, report, stage)});
    } catch (const std::exception& e) {
      abort_run(store, report, stage, e);
    }
  }
  return rows;
}

}  // namespace cpa::harness

#endif  // CPA_HARNESS_SWEEP_HPP_
