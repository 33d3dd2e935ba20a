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

#ifndef CPA_HARNESS_CONFIG_HPP_
#define CPA_HARNESS_CONFIG_HPP_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "cpa/aia/attack.hpp"
#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/core/types.hpp"
#include "cpa/data/dataset.hpp"
#include "cpa/data/synthetic.hpp"
#include "cpa/defenses/attriguard.hpp"
#include "cpa/defenses/memguard.hpp"
#include "cpa/defenses/olympus.hpp"
#include "cpa/mia/label_only.hpp"
#include "cpa/mia/nn_attack.hpp"
#include "cpa/nn/models.hpp"
#include "cpa/training/common.hpp"
#include "cpa/training/contrastive.hpp"
#include "cpa/training/talos.hpp"

extern char** environ;

namespace cpa {

inline void to_json(nlohmann::json& j, const SyntheticOptions& o) {
  j = {{"image_size", o.image_size},       {"pixel_noise", o.pixel_noise},
       {"label_noise", o.label_noise},     {"hue_jitter", o.hue_jitter},
       {"saturation", o.saturation},       {"position_jitter", o.position_jitter},
       {"blob_radius", o.blob_radius}};
}

inline void from_json(const nlohmann::json& j, SyntheticOptions& o) {
  SyntheticOptions d;
  o.image_size = j.value("image_size", d.image_size);
  o.pixel_noise = j.value("pixel_noise", d.pixel_noise);
  o.label_noise = j.value("label_noise", d.label_noise);
  o.hue_jitter = j.value("hue_jitter", d.hue_jitter);
  o.saturation = j.value("saturation", d.saturation);
  o.position_jitter = j.value("position_jitter", d.position_jitter);
  o.blob_radius = j.value("blob_radius", d.blob_radius);
}

inline void to_json(nlohmann::json& j, const SeedTriple& s) {
  j = {{"data", s.data}, {"model", s.model}, {"attack", s.attack}};
}

inline void from_json(const nlohmann::json& j, SeedTriple& s) {
  SeedTriple d;
  s.data = j.value("data", d.data);
  s.model = j.value("model", d.model);
  s.attack = j.value("attack", d.attack);
}

}  // namespace cpa

namespace cpa::harness {

struct DatasetSpec {
  // "synthetic" or "manifest" (a directory with index.csv and PPM images).
  std::string source = "synthetic";
  std::string path;
  std::size_t size = 2000;
  int num_classes = 4;
  int num_attributes = 2;
  SyntheticOptions synthetic;
};

inline void to_json(nlohmann::json& j, const DatasetSpec& d) {
  j = {{"source", d.source},           {"path", d.path},
       {"size", d.size},               {"num_classes", d.num_classes},
       {"num_attributes", d.num_attributes}, {"synthetic", d.synthetic}};
}

inline void from_json(const nlohmann::json& j, DatasetSpec& d) {
  DatasetSpec def;
  d.source = j.value("source", def.source);
  d.path = j.value("path", def.path);
  d.size = j.value("size", def.size);
  d.num_classes = j.value("num_classes", def.num_classes);
  d.num_attributes = j.value("num_attributes", def.num_attributes);
  d.synthetic = j.value("synthetic", def.synthetic);
}

inline const std::vector<std::string>& known_regimes() {
  static const std::vector<std::string> v = {"supervised", "contrastive", "talos"};
  return v;
}

inline const std::vector<std::string>& known_attacks() {
  static const std::vector<std::string> v = {"nn",         "metric_corr", "metric_conf",
                                             "metric_ent", "metric_ment", "label_only",
                                             "attribute"};
  return v;
}

inline const std::vector<std::string>& known_defenses() {
  static const std::vector<std::string> v = {"talos", "memguard", "olympus", "attriguard"};
  return v;
}

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  nn::ArchSpec arch;
  std::string regime = "contrastive";
  training::TrainConfig supervised;
  training::TrainConfig pretrain;
  training::TrainConfig head;
  training::ContrastiveConfig contrastive;
  training::TalosConfig talos;
  std::vector<std::string> attacks = {"nn", "metric_corr", "metric_conf", "metric_ent",
                                      "metric_ment", "attribute"};
  std::vector<std::string> defenses;
  mia::NnAttackConfig nn_attack;
  mia::LabelOnlyConfig label_only;
  // Records per side (members / non-members) queried by the label-only attack.
  std::size_t label_only_records = 100;
  aia::AttrAttackConfig attribute;
  // Top-k posteriors kept before attacks; 0 keeps all.
  int num_posteriors = 0;
  defenses::MemGuardConfig memguard;
  defenses::OlympusConfig olympus;
  defenses::AttriGuardConfig attriguard;
  SeedTriple seeds{1, 2, 3};
  std::string output_dir = "runs/experiment";

  bool uses_sensitive_labels() const {
    if (regime == "talos") return true;
    if (std::find(attacks.begin(), attacks.end(), "attribute") != attacks.end()) return true;
    for (const auto& d : defenses) {
      if (d != "memguard") return true;
    }
    return false;
  }

  void validate() const {
    auto contains = [](const std::vector<std::string>& v, const std::string& s) {
      return std::find(v.begin(), v.end(), s) != v.end();
    };
    if (dataset.source != "synthetic" && dataset.source != "manifest") {
      throw InvalidInput("unknown dataset source: " + dataset.source);
    }
    if (dataset.source == "manifest" && dataset.path.empty()) {
      throw InvalidInput("manifest datasets need a path");
    }
    if (!contains(known_regimes(), regime)) throw InvalidInput("unknown regime: " + regime);
    for (const auto& a : attacks) {
      if (!contains(known_attacks(), a)) throw InvalidInput("unknown attack: " + a);
    }
    for (const auto& d : defenses) {
      if (!contains(known_defenses(), d)) throw InvalidInput("unknown defense: " + d);
    }
    if (regime == "talos" && dataset.num_attributes < 2 && dataset.source == "synthetic") {
      throw InvalidInput("the talos regime requires sensitive labels");
    }
    if (num_posteriors < 0) throw InvalidInput("num_posteriors must be non-negative");
    (void)arch.resolved();
    supervised.validate(false);
    pretrain.validate(true);
    head.validate(false);
    contrastive.validate();
    talos.validate();
    attribute.validate();
    label_only.validate();
    memguard.validate();
    olympus.validate();
    attriguard.validate();
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},
       {"dataset", c.dataset},
       {"arch", c.arch},
       {"regime", c.regime},
       {"supervised", c.supervised},
       {"pretrain", c.pretrain},
       {"head", c.head},
       {"contrastive", c.contrastive},
       {"talos", c.talos},
       {"attacks", c.attacks},
       {"defenses", c.defenses},
       {"nn_attack", c.nn_attack},
       {"label_only", c.label_only},
       {"label_only_records", c.label_only_records},
       {"attribute", c.attribute},
       {"num_posteriors", c.num_posteriors},
       {"memguard", c.memguard},
       {"olympus", c.olympus},
       {"attriguard", c.attriguard},
       {"seeds", c.seeds},
       {"output_dir", c.output_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::vector<std::string> keys = {
      "name",     "dataset",   "arch",       "regime",     "supervised",
      "pretrain", "head",      "contrastive", "talos",     "attacks",
      "defenses", "nn_attack", "label_only", "label_only_records", "attribute",
      "num_posteriors", "memguard", "olympus", "attriguard", "seeds", "output_dir"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw InvalidInput("unknown config key: " + key);
    }
  }
  ExperimentConfig d;
  c.name = j.value("name", d.name);
  c.dataset = j.value("dataset", d.dataset);
  c.arch = j.value("arch", d.arch);
  c.regime = j.value("regime", d.regime);
  c.supervised = j.value("supervised", d.supervised);
  c.pretrain = j.value("pretrain", d.pretrain);
  c.head = j.value("head", d.head);
  c.contrastive = j.value("contrastive", d.contrastive);
  c.talos = j.value("talos", d.talos);
  c.attacks = j.value("attacks", d.attacks);
  c.defenses = j.value("defenses", d.defenses);
  c.nn_attack = j.value("nn_attack", d.nn_attack);
  c.label_only = j.value("label_only", d.label_only);
  c.label_only_records = j.value("label_only_records", d.label_only_records);
  c.attribute = j.value("attribute", d.attribute);
  c.num_posteriors = j.value("num_posteriors", d.num_posteriors);
  c.memguard = j.value("memguard", d.memguard);
  c.olympus = j.value("olympus", d.olympus);
  c.attriguard = j.value("attriguard", d.attriguard);
  c.seeds = d.seeds;
  if (j.contains("seeds")) {
    const auto& js = j.at("seeds");
    c.seeds.data = js.value("data", d.seeds.data);
    c.seeds.model = js.value("model", d.seeds.model);
    c.seeds.attack = js.value("attack", d.seeds.attack);
  }
  c.output_dir = j.value("output_dir", d.output_dir);
}

// FNV-1a over the canonical JSON form (sorted keys, no whitespace).
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string text = nlohmann::json(c).dump();
  Fnv1a h;
  h.update(text.data(), text.size());
  return h.hex();
}

// Overrides from a flat map: CPA_PRETRAIN__EPOCHS=5 sets pretrain.epochs.
// Nested keys are joined by a double underscore and lower-cased; values are
// parsed as JSON when possible and kept as strings otherwise.
inline void apply_overrides(nlohmann::json& config, const std::map<std::string, std::string>& vars,
                            const std::string& prefix = "CPA_") {
  for (const auto& [name, raw] : vars) {
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
    std::string key = name.substr(prefix.size());
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    std::vector<std::string> path;
    std::size_t start = 0;
    while (true) {
      const std::size_t sep = key.find("__", start);
      path.push_back(key.substr(start, sep - start));
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      value = raw;
    }
    nlohmann::json* node = &config;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->contains(path[i]) || !(*node)[path[i]].is_object()) {
        (*node)[path[i]] = nlohmann::json::object();
      }
      node = &(*node)[path[i]];
    }
    (*node)[path.back()] = value;
  }
}

inline std::map<std::string, std::string> environment_variables() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    const std::size_t eq = entry.find('=');
    if (eq != std::string::npos) out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

inline nlohmann::json toml_to_json(const std::string& text, const std::string& origin) {
  try {
    const toml::table table = toml::parse(text, origin);
    std::ostringstream out;
    out << toml::json_formatter{table};
    return nlohmann::json::parse(out.str());
  } catch (const toml::parse_error& e) {
    throw InvalidInput("cannot parse TOML config " + origin + ": " + std::string(e.description()));
  }
}

// Reads a JSON or TOML file (chosen by extension), applies environment
// overrides, and validates the result.
inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    const std::map<std::string, std::string>& env = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j;
  const std::string ext = path.extension().string();
  if (ext == ".toml") {
    j = toml_to_json(buffer.str(), path.string());
  } else {
    try {
      j = nlohmann::json::parse(buffer.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidInput("cannot parse JSON config " + path.string() + ": " + e.what());
    }
  }
  apply_overrides(j, env);
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

inline DatasetBundle load_dataset(const ExperimentConfig& c) {
  if (c.dataset.source == "manifest") {
    return load_manifest(c.dataset.path, c.arch.image_size, c.seeds.data);
  }
  SyntheticOptions opt = c.dataset.synthetic;
  opt.image_size = c.arch.image_size;
  return make_synthetic_dataset(c.dataset.size, c.dataset.num_classes, c.dataset.num_attributes,
                                c.seeds.data, opt);
}

}  // namespace cpa::harness

#endif  // CPA_HARNESS_CONFIG_HPP_
