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

#ifndef CPA_DATA_DATASET_HPP_
#define CPA_DATA_DATASET_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/data/image.hpp"

namespace cpa {

enum class Partition { kTargetTrain = 0, kTargetTest = 1, kShadowTrain = 2, kShadowTest = 3 };

inline constexpr std::array<Partition, 4> kAllPartitions = {
    Partition::kTargetTrain, Partition::kTargetTest, Partition::kShadowTrain,
    Partition::kShadowTest};

inline std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::kTargetTrain: return "target_train";
    case Partition::kTargetTest: return "target_test";
    case Partition::kShadowTrain: return "shadow_train";
    case Partition::kShadowTest: return "shadow_test";
  }
  return "unknown";
}

inline Partition parse_partition(std::string_view name) {
  for (Partition p : kAllPartitions) {
    if (partition_name(p) == name) return p;
  }
  throw InvalidInput("unknown partition name: " + std::string(name));
}

// Samples plus their assignment to the four experimental partitions.
struct DatasetBundle {
  std::vector<ImageSample> samples;
  std::vector<std::string> ids;
  std::vector<Partition> split;
  int num_classes = 0;
  int num_attributes = 0;

  std::vector<std::size_t> indices(Partition p) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == p) out.push_back(i);
    }
    return out;
  }

  std::vector<const ImageSample*> partition(Partition p) const {
    std::vector<const ImageSample*> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == p) out.push_back(&samples[i]);
    }
    return out;
  }

  std::size_t size(Partition p) const { return indices(p).size(); }

  // Target-model membership ground truth; only defined for target partitions.
  bool is_target_member(std::size_t i) const {
    if (split.at(i) == Partition::kTargetTrain) return true;
    if (split.at(i) == Partition::kTargetTest) return false;
    throw InvalidInput("sample is not in a target partition");
  }

  bool has_sensitive_labels(Partition p) const {
    for (const ImageSample* s : partition(p)) {
      if (!s->sensitive_label) return false;
    }
    return true;
  }
};

inline std::vector<std::string> default_ids(std::size_t n) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "s" + std::to_string(i);
  return ids;
}

// Shuffles and deals samples into four partitions whose sizes differ by at
// most one; the remainder goes to the earlier partitions in enum order.
inline DatasetBundle four_way_split(std::vector<ImageSample> samples, std::uint64_t seed,
                                    std::vector<std::string> ids = {}) {
  if (samples.size() < 4) throw InvalidInput("four_way_split: need at least 4 samples");
  if (ids.empty()) ids = default_ids(samples.size());
  require(ids.size() == samples.size(), "four_way_split: id count does not match samples");

  DatasetBundle bundle;
  const std::size_t n = samples.size();
  Rng rng(mix_seed(seed, stream::kSplit));
  auto order = rng.permutation(n);
  // Stratify on (attribute, class): dealing a grouped order round-robin
  // spreads every cell evenly over the four partitions.
  const auto key = [&samples](std::size_t i) {
    return std::pair<int, int>(samples[i].sensitive_label.value_or(-1), samples[i].task_label);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&key](std::size_t a, std::size_t b) { return key(a) < key(b); });

  bundle.split.assign(n, Partition::kTargetTrain);
  for (std::size_t i = 0; i < n; ++i) bundle.split[order[i]] = kAllPartitions[i % 4];
  for (const auto& s : samples) {
    bundle.num_classes = std::max(bundle.num_classes, s.task_label + 1);
    if (s.sensitive_label) {
      bundle.num_attributes = std::max(bundle.num_attributes, *s.sensitive_label + 1);
    }
  }
  bundle.samples = std::move(samples);
  bundle.ids = std::move(ids);
  return bundle;
}

// ---------------------------------------------------------------------------
// Persistence: split as JSON {sample_id: partition}, manifest as a directory
// of PPM images plus index.csv (path,task_label,sensitive_label).

inline nlohmann::json split_to_json(const DatasetBundle& bundle) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t i = 0; i < bundle.samples.size(); ++i) {
    out[bundle.ids[i]] = std::string(partition_name(bundle.split[i]));
  }
  return out;
}

inline void apply_split_json(DatasetBundle& bundle, const nlohmann::json& split) {
  bundle.split.assign(bundle.samples.size(), Partition::kTargetTrain);
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < bundle.ids.size(); ++i) by_id[bundle.ids[i]] = i;
  require(split.size() == bundle.samples.size(),
          "split file does not cover every sample exactly once");
  for (const auto& [id, part] : split.items()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw InvalidInput("split references unknown sample id: " + id);
    bundle.split[it->second] = parse_partition(part.get<std::string>());
  }
}

inline void save_manifest(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  std::ofstream index(dir / "index.csv");
  if (!index) throw IoError("cannot write " + (dir / "index.csv").string());
  index << "path,task_label,sensitive_label\n";
  for (std::size_t i = 0; i < bundle.samples.size(); ++i) {
    const std::string rel = "images/" + bundle.ids[i] + ".ppm";
    write_ppm(bundle.samples[i], dir / rel);
    index << rel << "," << bundle.samples[i].task_label << ",";
    if (bundle.samples[i].sensitive_label) index << *bundle.samples[i].sensitive_label;
    index << "\n";
  }
  std::ofstream split(dir / "split.json");
  split << split_to_json(bundle).dump(2) << "\n";
}

// Loads index.csv and its images; rescales to `image_size` when positive.
// A sibling split.json is applied if present, otherwise a fresh split is
// drawn from `seed`.
inline DatasetBundle load_manifest(const std::filesystem::path& dir, int image_size,
                                   std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::ifstream index(dir / "index.csv");
  if (!index) throw IoError("cannot open " + (dir / "index.csv").string());
  std::string line;
  std::getline(index, line);
  std::vector<ImageSample> samples;
  std::vector<std::string> ids;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string path, task, sensitive;
    std::getline(row, path, ',');
    std::getline(row, task, ',');
    std::getline(row, sensitive, ',');
    ImageSample s = read_ppm(dir / path);
    if (image_size > 0) s = rescale(s, image_size);
    try {
      s.task_label = std::stoi(task);
      if (!sensitive.empty()) s.sensitive_label = std::stoi(sensitive);
    } catch (const std::exception&) {
      throw IoError("index.csv: malformed label in row: " + line);
    }
    validate(s);
    samples.push_back(std::move(s));
    ids.push_back(fs::path(path).stem().string());
  }
  DatasetBundle bundle = four_way_split(std::move(samples), seed, std::move(ids));
  if (fs::exists(dir / "split.json")) {
    std::ifstream split(dir / "split.json");
    apply_split_json(bundle, nlohmann::json::parse(split));
  }
  return bundle;
}

}  // namespace cpa

#endif  // CPA_DATA_DATASET_HPP_
