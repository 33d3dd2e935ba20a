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

#ifndef CPA_DEFENSES_OUTPUT_HPP_
#define CPA_DEFENSES_OUTPUT_HPP_

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/core/types.hpp"

namespace cpa::defenses {

enum class OutputKind { kPerturbedPosteriors, kPerturbedRepresentation };

inline std::string output_kind_name(OutputKind k) {
  return k == OutputKind::kPerturbedPosteriors ? "perturbed_posteriors"
                                               : "perturbed_representation";
}

struct DefendedOutput {
  OutputKind kind = OutputKind::kPerturbedPosteriors;
  std::vector<double> payload;
  std::string defense_name;
  // Per-sample diagnostics, e.g. surrogate scores or perturbation norms.
  std::map<std::string, double> metadata;
  // Set when the defense could not act and returned its input.
  bool flagged = false;
  std::string note;
};

inline void to_json(nlohmann::json& j, const DefendedOutput& o) {
  j = {{"kind", output_kind_name(o.kind)}, {"payload", o.payload},
       {"defense_name", o.defense_name},   {"metadata", o.metadata},
       {"flagged", o.flagged},             {"note", o.note}};
}

inline void from_json(const nlohmann::json& j, DefendedOutput& o) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "perturbed_posteriors") {
    o.kind = OutputKind::kPerturbedPosteriors;
  } else if (kind == "perturbed_representation") {
    o.kind = OutputKind::kPerturbedRepresentation;
  } else {
    throw InvalidInput("unknown defended output kind: " + kind);
  }
  o.payload = j.at("payload").get<std::vector<double>>();
  o.defense_name = j.at("defense_name").get<std::string>();
  o.metadata = j.value("metadata", std::map<std::string, double>{});
  o.flagged = j.value("flagged", false);
  o.note = j.value("note", std::string());
}

inline RowVector as_row(const std::vector<double>& v) {
  RowVector r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

inline std::vector<double> as_vector(const RowVector& r) {
  return std::vector<double>(r.data(), r.data() + r.size());
}

}  // namespace cpa::defenses

#endif  // CPA_DEFENSES_OUTPUT_HPP_
