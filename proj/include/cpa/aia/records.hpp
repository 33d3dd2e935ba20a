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

#ifndef CPA_AIA_RECORDS_HPP_
#define CPA_AIA_RECORDS_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/core/types.hpp"
#include "cpa/data/dataset.hpp"
#include "cpa/nn/models.hpp"

namespace cpa::aia {

using SampleRefs = std::vector<const ImageSample*>;

struct RepresentationRecord {
  std::vector<double> representation;
  int sensitive_label = 0;
  Partition origin = Partition::kTargetTrain;
};

inline void validate(const RepresentationRecord& r, int num_attributes = 0) {
  if (r.representation.empty()) throw InvalidInput("representation record: empty vector");
  for (double v : r.representation) {
    if (!std::isfinite(v)) throw InvalidInput("representation record: non-finite value");
  }
  if (r.sensitive_label < 0 || (num_attributes > 0 && r.sensitive_label >= num_attributes)) {
    throw InvalidInput("representation record: sensitive label out of range");
  }
}

struct AttrDataset {
  std::vector<RepresentationRecord> train;
  std::vector<RepresentationRecord> test;
};

inline std::vector<RepresentationRecord> records_from_matrix(const Matrix& h,
                                                             const std::vector<int>& sensitive,
                                                             Partition origin) {
  require(static_cast<std::size_t>(h.rows()) == sensitive.size(),
          "representation records: one label per row");
  std::vector<RepresentationRecord> out;
  out.reserve(sensitive.size());
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    RepresentationRecord rec;
    rec.representation.assign(h.row(r).data(), h.row(r).data() + h.cols());
    rec.sensitive_label = sensitive[static_cast<std::size_t>(r)];
    rec.origin = origin;
    validate(rec);
    out.push_back(std::move(rec));
  }
  return out;
}

// Evaluation-mode encoder outputs on the unaugmented samples, rescaled to
// the encoder's input resolution when needed.
inline std::vector<RepresentationRecord> representation_records(nn::Encoder& encoder,
                                                                 const SampleRefs& samples,
                                                                 Partition origin) {
  if (samples.empty()) return {};
  const nn::ArchSpec& arch = encoder.arch();
  std::vector<ImageSample> resized;
  SampleRefs inputs = samples;
  std::vector<int> s;
  s.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImageSample* sample = samples[i];
    if (!sample->sensitive_label) throw InvalidInput("sample is missing its sensitive label");
    s.push_back(*sample->sensitive_label);
    if (sample->channels != arch.channels) {
      throw InvalidInput("representation records: encoder and image channels differ");
    }
    if (static_cast<int>(sample->size()) != encoder.input_dim()) {
      if (resized.empty()) resized.reserve(samples.size());
      resized.push_back(rescale(*sample, arch.image_size));
      inputs[i] = &resized.back();
    }
  }
  return records_from_matrix(encoder.encode(inputs), s, origin);
}

// Attack training data from target_train, test data from target_test.
inline AttrDataset build_attr_dataset(nn::Encoder& encoder, const DatasetBundle& bundle) {
  if (bundle.samples.empty()) throw InvalidInput("build_attr_dataset: empty bundle");
  AttrDataset out;
  out.train = representation_records(encoder, bundle.partition(Partition::kTargetTrain),
                                     Partition::kTargetTrain);
  out.test = representation_records(encoder, bundle.partition(Partition::kTargetTest),
                                    Partition::kTargetTest);
  return out;
}

// For a supervised model the representation is the network without its
// classification layer, which is exactly the encoder.
inline AttrDataset build_attr_dataset(nn::Classifier& model, const DatasetBundle& bundle) {
  return build_attr_dataset(model.encoder, bundle);
}

inline Matrix representation_matrix(const std::vector<RepresentationRecord>& records) {
  if (records.empty()) return Matrix(0, 0);
  const auto d = static_cast<Eigen::Index>(records.front().representation.size());
  Matrix x(static_cast<Eigen::Index>(records.size()), d);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (static_cast<Eigen::Index>(records[i].representation.size()) != d) {
      throw InvalidInput("representation records differ in dimension");
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      x(static_cast<Eigen::Index>(i), c) = records[i].representation[static_cast<std::size_t>(c)];
    }
  }
  return x;
}

inline std::vector<int> attribute_labels(const std::vector<RepresentationRecord>& records) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.sensitive_label);
  return out;
}

// Exactly floor(fraction * n) records, drawn without replacement.
inline std::vector<RepresentationRecord> subsample_records(
    const std::vector<RepresentationRecord>& records, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidInput("subsample_records: fraction must lie in (0, 1]");
  }
  const auto keep = static_cast<std::size_t>(std::floor(fraction * records.size()));
  Rng rng(derive_seed(seed, {stream::kSubsample}));
  const auto order = rng.permutation(records.size());
  std::vector<RepresentationRecord> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(records[order[i]]);
  return out;
}

// CSV: h_0..h_{d-1}, sensitive_label, partition and an optional trailing
// defense_name column.
inline void write_representation_csv(const std::vector<RepresentationRecord>& records,
                                     const std::filesystem::path& path,
                                     const std::string& defense_name = "") {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  const std::size_t d = records.empty() ? 0 : records.front().representation.size();
  for (std::size_t c = 0; c < d; ++c) out << "h_" << c << ",";
  out << "sensitive_label,partition";
  if (!defense_name.empty()) out << ",defense_name";
  out << "\n";
  for (const auto& r : records) {
    if (r.representation.size() != d) throw InvalidInput("representation records differ in dimension");
    for (double v : r.representation) out << v << ",";
    out << r.sensitive_label << "," << partition_name(r.origin);
    if (!defense_name.empty()) out << "," << defense_name;
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<RepresentationRecord> read_representation_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string field;
    while (std::getline(hs, field, ',')) header.push_back(field);
  }
  std::size_t d = 0;
  while (d < header.size() && header[d].rfind("h_", 0) == 0) ++d;
  if (d + 2 > header.size() || header[d] != "sensitive_label" || header[d + 1] != "partition") {
    throw IoError("unexpected representation CSV header in " + path.string());
  }
  std::vector<RepresentationRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(row, field, ',')) cols.push_back(field);
    if (cols.size() < d + 2) throw IoError("malformed representation row: " + line);
    RepresentationRecord r;
    for (std::size_t c = 0; c < d; ++c) r.representation.push_back(std::stod(cols[c]));
    r.sensitive_label = std::stoi(cols[d]);
    r.origin = parse_partition(cols[d + 1]);
    validate(r);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace cpa::aia

#endif  // CPA_AIA_RECORDS_HPP_
