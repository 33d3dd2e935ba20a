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

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <vector>

#include "cpa/aia/attack.hpp"
#include "cpa/aia/records.hpp"
#include "cpa/data/synthetic.hpp"
#include "gtest/gtest.h"

namespace cpa::aia {
namespace {

// Label multisets with the attribute distributions' majority shares.
std::vector<int> multiset(const std::vector<int>& counts) {
  std::vector<int> out;
  for (std::size_t v = 0; v < counts.size(); ++v) out.insert(out.end(), counts[v], static_cast<int>(v));
  return out;
}

std::vector<int> spread(int top, int classes, int total) {
  // `top` copies of value 0, the remaining records spread as evenly as
  // possible over the other classes, each below `top`.
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  counts[0] = top;
  int left = total - top;
  for (int c = 1; c < classes; ++c) {
    counts[static_cast<std::size_t>(c)] = left / (classes - c);
    left -= counts[static_cast<std::size_t>(c)];
  }
  return counts;
}

std::vector<RepresentationRecord> gaussian_records(std::size_t n, int dim, Rng& rng,
                                                   bool signal) {
  std::vector<RepresentationRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    RepresentationRecord r;
    r.sensitive_label = static_cast<int>(i % 2);
    for (int c = 0; c < dim; ++c) r.representation.push_back(rng.normal());
    if (signal) r.representation[0] = r.sensitive_label;
    out.push_back(std::move(r));
  }
  return out;
}

AttrAttackConfig quick_config(std::uint64_t seed) {
  AttrAttackConfig cfg;
  cfg.epochs = 40;
  cfg.seed = seed;
  return cfg;
}

nn::Encoder tiny_encoder(std::uint64_t seed) {
  nn::ArchSpec arch;
  arch.conv_channels = {2};
  arch.output_dim = 12;
  Rng rng(seed);
  return nn::build_encoder(arch, rng);
}

TEST(MajorityBaselineTest, ReproducesTableValues) {
  EXPECT_EQ(majority_baseline(multiset({421, 191, 145, 168, 75})), 0.421);
  EXPECT_EQ(majority_baseline(multiset(spread(12, 100, 1000))), 0.012);
  EXPECT_EQ(majority_baseline(multiset(spread(23, 50, 1000))), 0.023);
  EXPECT_EQ(majority_baseline(multiset(spread(53, 20, 1000))), 0.053);
  EXPECT_EQ(majority_baseline(multiset({50, 50})), 0.5);
  EXPECT_THROW(majority_baseline(std::vector<int>{}), InvalidInput);
}

TEST(MajorityBaselineTest, SpreadHelperKeepsValueZeroOnTop) {
  for (auto [top, classes] : {std::pair{12, 100}, {23, 50}, {53, 20}}) {
    const auto counts = spread(top, classes, 1000);
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0), 1000);
    EXPECT_EQ(*std::max_element(counts.begin(), counts.end()), top);
    EXPECT_EQ(std::count(counts.begin(), counts.end(), top), 1);
  }
}

TEST(AttrDatasetTest, RecordsFollowTargetPartitions) {
  const DatasetBundle data = make_synthetic_dataset(160, 2, 2, 3);
  nn::Encoder encoder = tiny_encoder(1);
  const AttrDataset ds = build_attr_dataset(encoder, data);
  ASSERT_EQ(ds.train.size(), 40u);
  ASSERT_EQ(ds.test.size(), 40u);
  for (const auto& r : ds.train) {
    EXPECT_EQ(r.origin, Partition::kTargetTrain);
    EXPECT_EQ(r.representation.size(), 12u);
  }
  for (const auto& r : ds.test) EXPECT_EQ(r.origin, Partition::kTargetTest);
  const auto train = data.partition(Partition::kTargetTrain);
  for (std::size_t i = 0; i < train.size(); ++i) {
    EXPECT_EQ(ds.train[i].sensitive_label, *train[i]->sensitive_label);
  }
}

TEST(AttrDatasetTest, IdenticalSamplesGiveIdenticalRepresentations) {
  const DatasetBundle data = make_synthetic_dataset(16, 2, 2, 4);
  nn::Encoder encoder = tiny_encoder(2);
  const SampleRefs same = {&data.samples[5], &data.samples[5]};
  const auto records = representation_records(encoder, same, Partition::kTargetTrain);
  EXPECT_EQ(records[0].representation, records[1].representation);
  const auto again = representation_records(encoder, same, Partition::kTargetTrain);
  EXPECT_EQ(again[0].representation, records[0].representation);
}

TEST(AttrDatasetTest, SupervisedRepresentationDropsClassificationLayer) {
  const DatasetBundle data = make_synthetic_dataset(32, 2, 2, 5);
  nn::Classifier model;
  model.encoder = tiny_encoder(3);
  Rng rng(3);
  model.head = nn::build_linear_head(12, 2, rng);
  const AttrDataset ds = build_attr_dataset(model, data);
  EXPECT_EQ(ds.train.front().representation.size(),
            static_cast<std::size_t>(model.head.input_dim()));
}

TEST(AttrDatasetTest, ResizesAndRejectsMismatchedImages) {
  SyntheticOptions big;
  big.image_size = 32;
  const DatasetBundle data = make_synthetic_dataset(16, 2, 2, 6, big);
  nn::Encoder encoder = tiny_encoder(4);
  EXPECT_EQ(build_attr_dataset(encoder, data).train.front().representation.size(), 12u);

  DatasetBundle gray = make_synthetic_dataset(16, 2, 2, 6);
  for (auto& s : gray.samples) {
    s.channels = 1;
    s.pixels.resize(s.pixels.size() / 3);
  }
  EXPECT_THROW(build_attr_dataset(encoder, gray), InvalidInput);

  DatasetBundle unlabeled = make_synthetic_dataset(16, 2, 2, 6);
  for (auto& s : unlabeled.samples) s.sensitive_label.reset();
  EXPECT_THROW(build_attr_dataset(encoder, unlabeled), InvalidInput);
}

TEST(AttrAttackTest, SeparableCoordinateIsRecovered) {
  Rng rng(11);
  const auto train = gaussian_records(400, 8, rng, true);
  const auto test = gaussian_records(200, 8, rng, true);
  AttrAttackModel attack = train_attr_attack(train, quick_config(1));
  EXPECT_GE(evaluate_attr(attack, test), 0.99);
  EXPECT_EQ(infer_attr(attack, test[0].representation), test[0].sensitive_label);
  const Matrix p = attack.posteriors(representation_matrix(test));
  for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
}

TEST(AttrAttackTest, IndependentLabelsStayNearChance) {
  Rng rng(12);
  const auto train = gaussian_records(400, 8, rng, false);
  const auto test = gaussian_records(400, 8, rng, false);
  AttrAttackModel attack = train_attr_attack(train, quick_config(2));
  EXPECT_NEAR(evaluate_attr(attack, test), 0.5, 0.1);
}

TEST(AttrAttackTest, SingleAttributeValueIsRejected) {
  Rng rng(13);
  auto train = gaussian_records(20, 4, rng, true);
  for (auto& r : train) r.sensitive_label = 1;
  EXPECT_THROW(train_attr_attack(train, quick_config(3)), InvalidInput);
  AttrAttackModel empty;
  EXPECT_THROW(evaluate_attr(empty, {}), InvalidInput);
}

TEST(AttrAttackTest, FractionUsesFloorOfRequestedShare) {
  Rng rng(14);
  const auto records = gaussian_records(97, 3, rng, true);
  for (double f : {0.1, 0.3, 0.5, 0.9, 1.0}) {
    EXPECT_EQ(subsample_records(records, f, 5).size(),
              static_cast<std::size_t>(std::floor(f * 97)));
  }
  EXPECT_THROW(subsample_records(records, 0.0, 5), InvalidInput);
  EXPECT_THROW(subsample_records(records, 1.5, 5), InvalidInput);
  AttrAttackConfig cfg = quick_config(4);
  cfg.train_fraction = 0.3;
  cfg.epochs = 2;
  AttrDataset ds{records, records};
  EXPECT_EQ(run_attr_attack(ds, cfg).train_records, 29u);
}

// Permuting representation coordinates together with the rows of the first
// layer's weights gives the same network function up to summation order.
TEST(AttrAttackTest, CoordinatePermutationLeavesAccuracyUnchanged) {
  Rng rng(15);
  const auto train = gaussian_records(300, 6, rng, true);
  auto test = gaussian_records(300, 6, rng, true);
  for (auto& r : test) r.representation[0] += rng.normal(0.0, 0.4);
  const auto perm = rng.permutation(6);
  auto permute = [&](std::vector<RepresentationRecord> records) {
    for (auto& r : records) {
      std::vector<double> q(6);
      for (std::size_t c = 0; c < 6; ++c) q[perm[c]] = r.representation[c];
      r.representation = q;
    }
    return records;
  };
  const AttrAttackConfig cfg = quick_config(6);
  AttrAttackModel base = build_attr_attack(6, 2, cfg);
  AttrAttackModel moved = base;
  auto& w0 = base.model.parameters()[0]->value;
  auto& w1 = moved.model.parameters()[0]->value;
  for (Eigen::Index c = 0; c < 6; ++c) w1.row(static_cast<Eigen::Index>(perm[c])) = w0.row(c);

  AttrAttackModel a = train_attr_attack(train, cfg, base);
  AttrAttackModel b = train_attr_attack(permute(train), cfg, moved);
  EXPECT_EQ(evaluate_attr(a, test), evaluate_attr(b, permute(test)));

  // Independent initialisations only agree within a tolerance.
  AttrAttackModel c = train_attr_attack(permute(train), quick_config(6));
  EXPECT_NEAR(evaluate_attr(a, test), evaluate_attr(c, permute(test)), 0.02);
}

TEST(AttrAttackTest, MajorityLowerBoundsTrainingAccuracy) {
  Rng rng(16);
  std::vector<RepresentationRecord> train;
  for (int i = 0; i < 200; ++i) {
    RepresentationRecord r;
    r.sensitive_label = i % 4 == 0 ? 1 : 0;
    r.representation = {rng.normal(), rng.normal(), rng.normal()};
    train.push_back(r);
  }
  AttrAttackModel attack = train_attr_attack(train, quick_config(7));
  EXPECT_GE(evaluate_attr(attack, train), majority_baseline(train));
}

TEST(AttrAttackTest, DepthSweepReportsEveryDepth) {
  Rng rng(17);
  const auto train = gaussian_records(300, 6, rng, true);
  const auto test = gaussian_records(200, 6, rng, true);
  const auto sweep = attack_depth_sweep(train, test, {3, 4, 5, 6}, quick_config(8));
  ASSERT_EQ(sweep.size(), 4u);
  double best = 0.0;
  for (const auto& [depth, acc] : sweep) {
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    best = std::max(best, acc);
  }
  EXPECT_GE(sweep.at(3), best - 0.05);
}

TEST(AttrAttackTest, ConfigJsonRoundTrip) {
  AttrAttackConfig cfg;
  cfg.depth = 5;
  cfg.use_sgd = false;
  cfg.train_fraction = 0.4;
  const AttrAttackConfig back = nlohmann::json(cfg).get<AttrAttackConfig>();
  EXPECT_EQ(back.depth, 5);
  EXPECT_FALSE(back.use_sgd);
  EXPECT_EQ(back.train_fraction, 0.4);
  EXPECT_EQ(AttrAttackConfig{}.learning_rate, 0.01);
  EXPECT_EQ(AttrAttackConfig{}.hidden_units, 128);
  EXPECT_THROW((nlohmann::json{{"optimizer", "rmsprop"}}.get<AttrAttackConfig>()), InvalidInput);
}

TEST(RepresentationCsvTest, RoundTripsWithDefenseColumn) {
  Rng rng(18);
  auto records = gaussian_records(5, 3, rng, true);
  records[2].origin = Partition::kTargetTest;
  const auto dir = std::filesystem::temp_directory_path() / "cpa_aia_csv";
  write_representation_csv(records, dir / "plain.csv");
  write_representation_csv(records, dir / "defended.csv", "olympus");
  for (const char* name : {"plain.csv", "defended.csv"}) {
    const auto back = read_representation_csv(dir / name);
    ASSERT_EQ(back.size(), records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      EXPECT_EQ(back[i].representation, records[i].representation);
      EXPECT_EQ(back[i].sensitive_label, records[i].sensitive_label);
      EXPECT_EQ(back[i].origin, records[i].origin);
    }
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace cpa::aia
