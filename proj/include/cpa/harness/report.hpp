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

#ifndef CPA_HARNESS_REPORT_HPP_
#define CPA_HARNESS_REPORT_HPP_

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/core/types.hpp"
#include "cpa/harness/config.hpp"

namespace cpa::harness {

// Per-sample classification losses of members and non-members, binned.
struct LossHistogram {
  std::vector<double> edges;
  std::vector<std::size_t> members;
  std::vector<std::size_t> nonmembers;
};

inline void to_json(nlohmann::json& j, const LossHistogram& h) {
  j = {{"edges", h.edges}, {"members", h.members}, {"nonmembers", h.nonmembers}};
}

inline void from_json(const nlohmann::json& j, LossHistogram& h) {
  h.edges = j.at("edges").get<std::vector<double>>();
  h.members = j.at("members").get<std::vector<std::size_t>>();
  h.nonmembers = j.at("nonmembers").get<std::vector<std::size_t>>();
}

inline LossHistogram make_loss_histogram(const std::vector<double>& member_losses,
                                         const std::vector<double>& nonmember_losses,
                                         int bins = 20) {
  require(bins >= 1, "loss histogram: need at least one bin");
  LossHistogram h;
  double hi = 0.0;
  for (double v : member_losses) hi = std::max(hi, v);
  for (double v : nonmember_losses) hi = std::max(hi, v);
  if (hi <= 0.0) hi = 1.0;
  for (int b = 0; b <= bins; ++b) h.edges.push_back(hi * b / bins);
  h.members.assign(static_cast<std::size_t>(bins), 0);
  h.nonmembers.assign(static_cast<std::size_t>(bins), 0);
  auto bin_of = [&](double v) {
    const auto b = static_cast<int>(std::floor(v / hi * bins));
    return static_cast<std::size_t>(std::clamp(b, 0, bins - 1));
  };
  for (double v : member_losses) ++h.members[bin_of(v)];
  for (double v : nonmember_losses) ++h.nonmembers[bin_of(v)];
  return h;
}

struct ModelResult {
  double task_train_accuracy = 0.0;
  double task_test_accuracy = 0.0;
  double overfitting_level = 0.0;
  // Attack name -> accuracy. Membership attacks use balanced sets; the
  // attribute attack uses the held-out target records.
  std::map<std::string, double> attacks;
  double attribute_baseline = std::nan("");
  // |mean member loss - mean non-member loss|.
  double loss_divergence = 0.0;
  LossHistogram loss_histogram;
  std::size_t eval_members = 0;
  std::size_t eval_nonmembers = 0;
  std::map<std::string, double> diagnostics;
};

inline nlohmann::json nullable(double v) {
  return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

inline double from_nullable(const nlohmann::json& j) {
  return j.is_null() ? std::nan("") : j.get<double>();
}

inline void to_json(nlohmann::json& j, const ModelResult& r) {
  j = {{"task_train_accuracy", r.task_train_accuracy},
       {"task_test_accuracy", r.task_test_accuracy},
       {"overfitting_level", r.overfitting_level},
       {"attacks", r.attacks},
       {"attribute_baseline", nullable(r.attribute_baseline)},
       {"loss_divergence", r.loss_divergence},
       {"loss_histogram", r.loss_histogram},
       {"eval_members", r.eval_members},
       {"eval_nonmembers", r.eval_nonmembers},
       {"diagnostics", r.diagnostics}};
}

inline void from_json(const nlohmann::json& j, ModelResult& r) {
  r.task_train_accuracy = j.at("task_train_accuracy").get<double>();
  r.task_test_accuracy = j.at("task_test_accuracy").get<double>();
  r.overfitting_level = j.at("overfitting_level").get<double>();
  r.attacks = j.at("attacks").get<std::map<std::string, double>>();
  r.attribute_baseline = from_nullable(j.at("attribute_baseline"));
  r.loss_divergence = j.at("loss_divergence").get<double>();
  r.loss_histogram = j.at("loss_histogram").get<LossHistogram>();
  r.eval_members = j.at("eval_members").get<std::size_t>();
  r.eval_nonmembers = j.at("eval_nonmembers").get<std::size_t>();
  r.diagnostics = j.value("diagnostics", std::map<std::string, double>{});
}

inline bool operator==(const LossHistogram& a, const LossHistogram& b) {
  return a.edges == b.edges && a.members == b.members && a.nonmembers == b.nonmembers;
}

inline bool operator==(const ModelResult& a, const ModelResult& b) {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.task_train_accuracy == b.task_train_accuracy &&
         a.task_test_accuracy == b.task_test_accuracy &&
         a.overfitting_level == b.overfitting_level && a.attacks == b.attacks &&
         same(a.attribute_baseline, b.attribute_baseline) &&
         a.loss_divergence == b.loss_divergence && a.loss_histogram == b.loss_histogram &&
         a.eval_members == b.eval_members && a.eval_nonmembers == b.eval_nonmembers &&
         a.diagnostics == b.diagnostics;
}

struct Provenance {
  SeedTriple seeds;
  std::string config_hash;
  std::string started_at;
  std::string finished_at;
};

inline void to_json(nlohmann::json& j, const Provenance& p) {
  j = {{"seeds", p.seeds},
       {"config_hash", p.config_hash},
       {"started_at", p.started_at},
       {"finished_at", p.finished_at}};
}

inline void from_json(const nlohmann::json& j, Provenance& p) {
  p.seeds = j.at("seeds").get<SeedTriple>();
  p.config_hash = j.at("config_hash").get<std::string>();
  p.started_at = j.value("started_at", std::string());
  p.finished_at = j.value("finished_at", std::string());
}

struct AuditReport {
  std::string name;
  std::string regime;
  ModelResult undefended;
  std::map<std::string, ModelResult> defenses;
  // Defense -> metric -> defended minus undefended value.
  std::map<std::string, std::map<std::string, double>> deltas;
  Provenance provenance;
  nlohmann::json config;
  bool partial = false;
  std::string failed_stage;
  std::string error;
};

inline void to_json(nlohmann::json& j, const AuditReport& r) {
  j = {{"name", r.name},
       {"regime", r.regime},
       {"undefended", r.undefended},
       {"defenses", r.defenses},
       {"deltas", r.deltas},
       {"provenance", r.provenance},
       {"config", r.config},
       {"partial", r.partial}};
  if (r.partial) {
    j["failed_stage"] = r.failed_stage;
    j["error"] = r.error;
  }
}

inline void from_json(const nlohmann::json& j, AuditReport& r) {
  r.name = j.at("name").get<std::string>();
  r.regime = j.at("regime").get<std::string>();
  r.undefended = j.at("undefended").get<ModelResult>();
  r.defenses = j.at("defenses").get<std::map<std::string, ModelResult>>();
  r.deltas = j.at("deltas").get<std::map<std::string, std::map<std::string, double>>>();
  r.provenance = j.at("provenance").get<Provenance>();
  r.config = j.at("config");
  r.partial = j.value("partial", false);
  r.failed_stage = j.value("failed_stage", std::string());
  r.error = j.value("error", std::string());
}

inline bool operator==(const AuditReport& a, const AuditReport& b) {
  return nlohmann::json(a) == nlohmann::json(b);
}

// The report without its wall-clock timestamps, for determinism checks.
inline nlohmann::json without_timestamps(const AuditReport& r) {
  nlohmann::json j = r;
  j["provenance"].erase("started_at");
  j["provenance"].erase("finished_at");
  return j;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string config_hash(const nlohmann::json& config) {
  const std::string text = config.dump();
  Fnv1a h;
  h.update(text.data(), text.size());
  return h.hex();
}

// Throws ContractViolation unless the stored hash matches the stored config.
inline void check_integrity(const AuditReport& r) {
  if (config_hash(r.config) != r.provenance.config_hash) {
    throw ContractViolation("report config hash does not match its config");
  }
  auto check = [](const ModelResult& m, const std::string& who) {
    for (double v : {m.task_train_accuracy, m.task_test_accuracy}) {
      if (v < 0.0 || v > 1.0) throw ContractViolation(who + ": accuracy outside [0, 1]");
    }
    for (const auto& [name, v] : m.attacks) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ContractViolation(who + ": " + name + " accuracy outside [0, 1]");
      }
    }
  };
  check(r.undefended, "undefended");
  for (const auto& [name, m] : r.defenses) check(m, name);
}

struct CsvRow {
  std::string defense;
  std::string metric;
  double value = 0.0;
};

// One row per (defense, attack) cell; "none" is the undefended model.
inline std::vector<CsvRow> report_rows(const AuditReport& r) {
  std::vector<CsvRow> rows;
  for (const auto& [attack, acc] : r.undefended.attacks) rows.push_back({"none", attack, acc});
  for (const auto& [defense, m] : r.defenses) {
    for (const auto& [attack, acc] : m.attacks) rows.push_back({defense, attack, acc});
  }
  return rows;
}

inline void write_report_csv(const AuditReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "defense,attack,accuracy\n";
  for (const CsvRow& row : report_rows(r)) {
    out << row.defense << "," << row.metric << "," << row.value << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

inline AuditReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<AuditReport>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed report " + path.string() + ": " + e.what());
  }
}

inline std::set<std::string> parse_formats(const std::string& list) {
  std::set<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = list.find(',', start);
    const std::string f = list.substr(start, comma == std::string::npos ? std::string::npos
                                                                        : comma - start);
    if (!f.empty()) {
      if (f != "json" && f != "csv" && f != "png") throw InvalidInput("unknown format: " + f);
      out.insert(f);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace cpa::harness

#endif  // CPA_HARNESS_REPORT_HPP_
