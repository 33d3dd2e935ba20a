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

#ifndef CPA_MIA_RECORDS_HPP_
#define CPA_MIA_RECORDS_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/data/dataset.hpp"
#include "cpa/nn/losses.hpp"
#include "cpa/nn/models.hpp"

namespace cpa::mia {

using SampleRefs = std::vector<const ImageSample*>;

// One black-box query: posteriors, labels, and membership ground truth.
struct PosteriorRecord {
  std::vector<double> posteriors;
  int true_label = 0;
  int predicted_label = 0;
  bool is_member = false;

  std::span<const double> p() const { return posteriors; }
  double p_true() const { return posteriors[static_cast<std::size_t>(true_label)]; }
};

inline void validate(const PosteriorRecord& r) {
  if (r.posteriors.empty()) throw InvalidInput("record: empty posterior vector");
  nn::detail::check_distribution(r.posteriors);
  if (r.true_label < 0 || static_cast<std::size_t>(r.true_label) >= r.posteriors.size()) {
    throw InvalidInput("record: true label out of range");
  }
  if (r.predicted_label != nn::argmax(r.posteriors)) {
    throw InvalidInput("record: predicted label is not the posterior argmax");
  }
}

inline PosteriorRecord make_record(std::vector<double> posteriors, int true_label,
                                   bool is_member) {
  PosteriorRecord r;
  r.posteriors = std::move(posteriors);
  r.true_label = true_label;
  r.is_member = is_member;
  if (r.posteriors.empty()) throw InvalidInput("record: empty posterior vector");
  r.predicted_label = nn::argmax(r.posteriors);
  validate(r);
  return r;
}

inline std::vector<PosteriorRecord> records_from_posteriors(const Matrix& p,
                                                            const std::vector<int>& labels,
                                                            const std::vector<bool>& members) {
  if (static_cast<std::size_t>(p.rows()) != labels.size() || labels.size() != members.size()) {
    throw InvalidInput("records: posterior/label/membership counts differ");
  }
  std::vector<PosteriorRecord> out;
  out.reserve(labels.size());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    out.push_back(make_record(std::vector<double>(p.row(r).data(), p.row(r).data() + p.cols()),
                              labels[i], members[i]));
  }
  return out;
}

// Queries `model` once per sample.
inline std::vector<PosteriorRecord> query_records(nn::Classifier& model, const SampleRefs& samples,
                                                  const std::vector<bool>& members) {
  if (!model.trained) throw ContractViolation("query_records: model is not trained");
  if (samples.size() != members.size()) {
    throw InvalidInput("query_records: one membership flag per sample is required");
  }
  if (samples.empty()) return {};
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const ImageSample* s : samples) labels.push_back(s->task_label);
  return records_from_posteriors(model.posteriors(samples), labels, members);
}

// Members from `in`, non-members from `out` (e.g. shadow_train/shadow_test).
inline std::vector<PosteriorRecord> query_records(nn::Classifier& model,
                                                  const DatasetBundle& bundle, Partition in,
                                                  Partition out) {
  SampleRefs samples = bundle.partition(in);
  std::vector<bool> members(samples.size(), true);
  for (const ImageSample* s : bundle.partition(out)) {
    samples.push_back(s);
    members.push_back(false);
  }
  return query_records(model, samples, members);
}

inline std::size_t count_members(const std::vector<PosteriorRecord>& records) {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.is_member; }));
}

// Equal numbers of members and non-members, drawn without replacement.
// Already balanced input is returned unchanged.
inline std::vector<PosteriorRecord> balance_records(const std::vector<PosteriorRecord>& records,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> in, out;
  for (std::size_t i = 0; i < records.size(); ++i) (records[i].is_member ? in : out).push_back(i);
  if (in.size() == out.size()) return records;
  const std::size_t keep = std::min(in.size(), out.size());
  Rng rng(derive_seed(seed, {stream::kSubsample}));
  auto& larger = in.size() > out.size() ? in : out;
  rng.shuffle(larger);
  larger.resize(keep);
  std::sort(larger.begin(), larger.end());
  std::vector<std::size_t> order;
  std::merge(in.begin(), in.end(), out.begin(), out.end(), std::back_inserter(order));
  std::vector<PosteriorRecord> result;
  result.reserve(order.size());
  for (std::size_t i : order) result.push_back(records[i]);
  return result;
}

// Keeps the k largest posteriors (ties to the lower index), zeroes the rest
// and renormalises. k >= number of classes is the identity.
inline PosteriorRecord truncate_posteriors(const PosteriorRecord& r, int k) {
  require(k >= 1, "truncate_posteriors: k must be positive");
  if (static_cast<std::size_t>(k) >= r.posteriors.size()) return r;
  std::vector<std::size_t> order(r.posteriors.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r.posteriors[a] > r.posteriors[b];
  });
  std::vector<double> p(r.posteriors.size(), 0.0);
  double total = 0.0;
  for (int i = 0; i < k; ++i) total += p[order[i]] = r.posteriors[order[i]];
  if (total <= 0.0) throw DegenerateInput("truncate_posteriors: top-k mass is zero");
  for (double& v : p) v /= total;
  return make_record(std::move(p), r.true_label, r.is_member);
}

// CSV: posteriors (semicolon-joined), true_label, predicted_label, is_member
// and an optional trailing defense_name column.
inline void write_records_csv(const std::vector<PosteriorRecord>& records,
                              const std::filesystem::path& path,
                              const std::string& defense_name = "") {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "posteriors,true_label,predicted_label,is_member";
  if (!defense_name.empty()) out << ",defense_name";
  out << "\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.posteriors.size(); ++i) {
      out << (i ? ";" : "") << r.posteriors[i];
    }
    out << "," << r.true_label << "," << r.predicted_label << "," << (r.is_member ? 1 : 0);
    if (!defense_name.empty()) out << "," << defense_name;
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<PosteriorRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("posteriors,true_label,predicted_label,is_member", 0) != 0) {
    throw IoError("unexpected record CSV header in " + path.string());
  }
  std::vector<PosteriorRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(row, field, ',')) cols.push_back(field);
    if (cols.size() < 4) throw IoError("malformed record row: " + line);
    PosteriorRecord r;
    std::stringstream ps(cols[0]);
    while (std::getline(ps, field, ';')) r.posteriors.push_back(std::stod(field));
    r.true_label = std::stoi(cols[1]);
    r.predicted_label = std::stoi(cols[2]);
    r.is_member = cols[3] == "1";
    validate(r);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace cpa::mia

#endif  // CPA_MIA_RECORDS_HPP_
