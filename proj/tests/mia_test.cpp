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
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <vector>

#include "cpa/data/synthetic.hpp"
#include "cpa/mia/label_only.hpp"
#include "cpa/mia/metrics.hpp"
#include "cpa/mia/nn_attack.hpp"
#include "cpa/mia/records.hpp"
#include "cpa/mia/suite.hpp"
#include "gtest/gtest.h"
#include "oracles.hpp"

namespace cpa::mia {
namespace {

std::vector<double> random_simplex(int k, Rng& rng, double sharpness = 1.0) {
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (double& v : p) total += v = std::exp(sharpness * rng.normal());
  for (double& v : p) v /= total;
  return p;
}

std::vector<PosteriorRecord> random_records(std::size_t n, int k, Rng& rng) {
  std::vector<PosteriorRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool member = rng.bernoulli(0.5);
    out.push_back(make_record(random_simplex(k, rng, member ? 3.0 : 1.0),
                              static_cast<int>(rng.index(static_cast<std::size_t>(k))), member));
  }
  return out;
}

TEST(RecordTest, PredictedLabelIsArgmax) {
  const PosteriorRecord r = make_record({0.2, 0.7, 0.1}, 1, true);
  EXPECT_EQ(r.predicted_label, 1);
  EXPECT_THROW(make_record({0.2, 0.7}, 0, true), InvalidInput);
  EXPECT_THROW(make_record({0.5, 0.5}, 2, true), InvalidInput);
}

TEST(RecordTest, QueryRecordsContract) {
  const DatasetBundle data = make_synthetic_dataset(32, 2, 2, 1);
  Rng rng(1);
  nn::ArchSpec arch;
  arch.conv_channels = {2};
  arch.output_dim = 8;
  nn::Classifier model;
  model.encoder = nn::build_encoder(arch, rng);
  model.head = nn::build_linear_head(8, 2, rng);
  const SampleRefs samples = {&data.samples[0], &data.samples[0], &data.samples[3]};
  EXPECT_THROW(query_records(model, samples, {true, true, false}), ContractViolation);
  model.trained = true;
  const auto records = query_records(model, samples, {true, true, false});
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].posteriors, records[1].posteriors);
  EXPECT_FALSE(records[2].is_member);
  const auto split = query_records(model, data, Partition::kShadowTrain, Partition::kShadowTest);
  EXPECT_EQ(split.size(), 16u);
  EXPECT_EQ(count_members(split), 8u);
}

TEST(FeatureTest, Examples) {
  const MiaFeature a = build_mia_feature(make_record({0.2, 0.7, 0.1}, 1, true));
  EXPECT_EQ(a.top1, 0.7);
  EXPECT_EQ(a.top2, 0.2);
  EXPECT_EQ(a.correct, 1.0);
  const MiaFeature tie = build_mia_feature(make_record({0.5, 0.5}, 0, true));
  EXPECT_EQ(tie.top1, 0.5);
  EXPECT_EQ(tie.top2, 0.5);
  EXPECT_EQ(tie.correct, 1.0);
  const MiaFeature wrong = build_mia_feature(make_record({0.9, 0.1}, 1, true));
  EXPECT_EQ(wrong.top1, 0.9);
  EXPECT_EQ(wrong.top2, 0.1);
  EXPECT_EQ(wrong.correct, 0.0);
  PosteriorRecord single;
  single.posteriors = {1.0};
  EXPECT_THROW(build_mia_feature(single), InvalidInput);
}

TEST(FeatureTest, PermutingPosteriorsLeavesFeatureUnchanged) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(9));
    const PosteriorRecord r = make_record(random_simplex(k, rng, 2.0),
                                          static_cast<int>(rng.index(k)), true);
    const auto perm = rng.permutation(static_cast<std::size_t>(k));
    std::vector<double> q(r.posteriors.size());
    int new_label = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      q[perm[i]] = r.posteriors[i];
      if (static_cast<int>(i) == r.true_label) new_label = static_cast<int>(perm[i]);
    }
    const MiaFeature a = build_mia_feature(r);
    const MiaFeature b = build_mia_feature(make_record(q, new_label, true));
    EXPECT_EQ(a.top1, b.top1);
    EXPECT_EQ(a.top2, b.top2);
    // Correctness can only differ when the top two are tied.
    if (a.top1 != a.top2) {
      EXPECT_EQ(a.correct, b.correct);
    }
    EXPECT_GE(a.top1, a.top2);
    EXPECT_LE(a.top1 + a.top2, 1.0 + 1e-6);
  }
}

Matrix features_for(std::size_t n, bool member, Rng& rng) {
  Matrix x(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double top1 = member ? 0.99 : 0.5;
    x.row(r) << top1, (1.0 - top1) * rng.uniform(0.3, 1.0), rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  return x;
}

TEST(NnAttackTest, SeparatesConfidentMembers) {
  Rng rng(7);
  auto build = [&](std::size_t n) {
    Matrix x(static_cast<Eigen::Index>(2 * n), 3);
    x << features_for(n, true, rng), features_for(n, false, rng);
    std::vector<bool> m(2 * n, false);
    std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n), true);
    return std::pair{x, m};
  };
  const auto [train_x, train_m] = build(200);
  const auto [test_x, test_m] = build(200);
  NnAttackConfig cfg;
  cfg.seed = 2;
  NnAttack attack = train_nn_attack(train_x, train_m, cfg);
  std::vector<bool> decisions;
  for (double s : attack.member_scores(test_x)) decisions.push_back(s > 0.5);
  EXPECT_GE(evaluate_attack(decisions, test_m), 0.95);
  // A training member's own feature is scored as a member.
  EXPECT_GT(attack.member_scores(Matrix(train_x.row(0))).front(), 0.5);
}

TEST(NnAttackTest, NoSignalIsNearChance) {
  Rng rng(8);
  auto random_set = [&](std::size_t n) {
    std::vector<PosteriorRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(make_record(random_simplex(4, rng, 1.5), static_cast<int>(rng.index(4)),
                                i % 2 == 0));
    }
    return out;
  };
  const auto shadow = random_set(400);
  const auto target = random_set(400);
  NnAttackConfig cfg;
  cfg.seed = 3;
  NnAttack attack = train_nn_attack(shadow, cfg);
  EXPECT_NEAR(evaluate_attack(attack.decide(target), membership(target)), 0.5, 0.1);
}

TEST(NnAttackTest, SingleClassShadowIsRejected) {
  Rng rng(9);
  const Matrix x = features_for(20, true, rng);
  EXPECT_THROW(train_nn_attack(x, std::vector<bool>(20, true), NnAttackConfig{}), InvalidInput);
}

TEST(MetricTest, CorrRuleAndBalancedIdentity) {
  EXPECT_TRUE(metric_corr(make_record({0.3, 0.7}, 1, false)));
  EXPECT_FALSE(metric_corr(make_record({0.3, 0.7}, 0, true)));
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(60);
    std::vector<PosteriorRecord> records;
    for (std::size_t i = 0; i < 2 * n; ++i) {
      records.push_back(make_record(random_simplex(3, rng), static_cast<int>(rng.index(3)), i < n));
    }
    std::size_t train_correct = 0, test_correct = 0;
    for (std::size_t i = 0; i < 2 * n; ++i) {
      (i < n ? train_correct : test_correct) += metric_corr(records[i]);
    }
    const double train_acc = static_cast<double>(train_correct) / n;
    const double test_acc = static_cast<double>(test_correct) / n;
    const double acc =
        evaluate_attack(metric_decisions(records, Metric::kCorr, {}), membership(records));
    EXPECT_DOUBLE_EQ(acc, (train_acc + 1.0 - test_acc) / 2.0);
  }
}

AttackThresholds uniform_thresholds(Metric m, double value, int classes) {
  AttackThresholds t;
  for (int c = 0; c < classes; ++c) t.per_class[metric_name(m)][c] = value;
  return t;
}

TEST(MetricTest, ConfidenceExamples) {
  const auto t = uniform_thresholds(Metric::kConf, 0.9, 2);
  EXPECT_TRUE(metric_conf(make_record({0.01, 0.99}, 1, true), t));
  EXPECT_FALSE(metric_conf(make_record({0.9, 0.1}, 1, true), t));
  const auto zero = uniform_thresholds(Metric::kConf, 0.0, 2);
  Rng rng(2);
  for (const auto& r : random_records(100, 2, rng)) EXPECT_TRUE(metric_conf(r, zero));
  EXPECT_THROW(metric_conf(make_record({0.2, 0.3, 0.5}, 2, true), t), CalibrationError);
  EXPECT_THROW(metric_ent(make_record({0.2, 0.8}, 1, true), t), CalibrationError);
}

TEST(MetricTest, EntropyExamples) {
  const auto t = uniform_thresholds(Metric::kEnt, 1e-9, 3);
  EXPECT_TRUE(metric_ent(make_record({0.0, 1.0, 0.0}, 1, true), t));
  EXPECT_NEAR(nn::entropy(std::vector<double>(10, 0.1)), std::log(10.0), 1e-12);
  const auto negative = uniform_thresholds(Metric::kEnt, -0.1, 3);
  Rng rng(3);
  for (const auto& r : random_records(100, 3, rng)) EXPECT_FALSE(metric_ent(r, negative));
}

TEST(MetricTest, ModifiedEntropyExamples) {
  EXPECT_EQ(nn::modified_entropy(std::vector<double>{0.0, 1.0}, 1), 0.0);
  EXPECT_NEAR(nn::modified_entropy(std::vector<double>{0.5, 0.5}, 0), std::log(2.0), 1e-12);
  const auto t = uniform_thresholds(Metric::kMent, 0.1, 2);
  EXPECT_TRUE(metric_ment(make_record({0.01, 0.99}, 1, true), t));
  EXPECT_FALSE(metric_ment(make_record({0.5, 0.5}, 1, true), t));
}

TEST(MetricTest, DecisionsInvariantUnderValuePreservingPerturbations) {
  Rng rng(12);
  AttackThresholds t;
  for (Metric m : kCalibratedMetrics) {
    for (int c = 0; c < 6; ++c) t.per_class[metric_name(m)][c] = rng.uniform(0.0, 1.5);
  }
  for (int trial = 0; trial < 300; ++trial) {
    const PosteriorRecord r =
        make_record(random_simplex(6, rng, 2.0), static_cast<int>(rng.index(6)), true);
    // Permute the entries that are neither the true class nor the argmax.
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < 6; ++i) {
      if (static_cast<int>(i) != r.true_label && static_cast<int>(i) != r.predicted_label) {
        free.push_back(i);
      }
    }
    std::vector<std::size_t> shuffled = free;
    rng.shuffle(shuffled);
    std::vector<double> q = r.posteriors;
    for (std::size_t i = 0; i < free.size(); ++i) q[shuffled[i]] = r.posteriors[free[i]];
    const PosteriorRecord s = make_record(q, r.true_label, true);
    for (Metric m : {Metric::kCorr, Metric::kConf, Metric::kEnt, Metric::kMent}) {
      EXPECT_NEAR(metric_value(r, m), metric_value(s, m), 1e-12);
      EXPECT_EQ(metric_decision(r, m, t), metric_decision(s, m, t)) << metric_name(m);
    }
  }
}

TEST(CalibrationTest, AdjacentDoublesStaySeparated) {
  const double a = 0.88724223957717785;
  const double b = std::nextafter(a, 2.0);
  for (bool higher : {false, true}) {
    const std::vector<double> values = {a, b};
    const std::vector<bool> members = {!higher, higher};
    const ThresholdFit fit = calibrate_threshold(values, members, higher);
    EXPECT_EQ(fit.balanced_accuracy, 1.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      EXPECT_EQ(threshold_decision(values[i], fit.threshold, higher), members[i]);
    }
  }
}

TEST(CalibrationTest, SeparableLowerIsMember) {
  std::vector<double> values;
  std::vector<bool> members;
  for (int i = 0; i < 10; ++i) {
    values.push_back(0.1);
    members.push_back(true);
    values.push_back(0.9);
    members.push_back(false);
  }
  const ThresholdFit fit = calibrate_threshold(values, members, false);
  EXPECT_GT(fit.threshold, 0.1);
  EXPECT_LT(fit.threshold, 0.9);
  EXPECT_EQ(fit.balanced_accuracy, 1.0);
  const ThresholdFit up = calibrate_threshold(values, members, true);
  EXPECT_EQ(up.balanced_accuracy, 0.5);
}

TEST(CalibrationTest, IdenticalDistributionsGiveChance) {
  Rng rng(13);
  auto draw = [&](std::size_t n) {
    std::vector<PosteriorRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(make_record(random_simplex(3, rng, 2.0), static_cast<int>(rng.index(3)),
                                i % 2 == 0));
    }
    return out;
  };
  const auto shadow = draw(600);
  const auto target = draw(600);
  const AttackThresholds t = calibrate_thresholds(shadow, 3);
  for (Metric m : kCalibratedMetrics) {
    EXPECT_NEAR(evaluate_attack(metric_decisions(target, m, t), membership(target)), 0.5, 0.07)
        << metric_name(m);
  }
}

TEST(CalibrationTest, DegenerateClassesAreFlagged) {
  std::vector<PosteriorRecord> shadow = {
      make_record({0.8, 0.1, 0.1}, 0, true), make_record({0.4, 0.3, 0.3}, 0, false),
      make_record({0.7, 0.2, 0.1}, 0, true), make_record({0.1, 0.6, 0.3}, 1, true)};
  const AttackThresholds t = calibrate_thresholds(shadow, 3);
  EXPECT_EQ(t.threshold(Metric::kConf, 1), 0.6);
  EXPECT_EQ(t.threshold(Metric::kConf, 2), t.global.at("metric_conf"));
  EXPECT_NEAR(t.threshold(Metric::kConf, 0), 0.55, 1e-12);
  const auto mentions = [&](const std::string& needle) {
    return std::any_of(t.flags.begin(), t.flags.end(),
                       [&](const std::string& f) { return f.find(needle) != std::string::npos; });
  };
  EXPECT_TRUE(mentions("metric_conf class 1: single"));
  EXPECT_TRUE(mentions("metric_conf class 2: no usable"));
  EXPECT_FALSE(mentions("class 0"));
  EXPECT_THROW(calibrate_thresholds({}, 3), InvalidInput);
}

TEST(CalibrationTest, OptimalAgainstExhaustiveScan) {
  Rng rng(14);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 20 + rng.index(481);
    const int k = 2 + static_cast<int>(rng.index(4));
    std::vector<PosteriorRecord> shadow = random_records(n, k, rng);
    // Rounded posteriors create many ties.
    if (trial % 2 == 0) {
      for (auto& r : shadow) {
        for (double& v : r.posteriors) v = std::round(v * 20.0) / 20.0;
        const double total = std::accumulate(r.posteriors.begin(), r.posteriors.end(), 0.0);
        for (double& v : r.posteriors) v /= total;
        r = make_record(r.posteriors, r.true_label, r.is_member);
      }
    }
    const AttackThresholds t = calibrate_thresholds(shadow, k);
    for (Metric m : kCalibratedMetrics) {
      for (int c = 0; c < k; ++c) {
        std::vector<double> values;
        std::vector<bool> members;
        std::vector<bool> decisions;
        for (const auto& r : shadow) {
          if (r.true_label != c) continue;
          values.push_back(metric_value(r, m));
          members.push_back(r.is_member);
          decisions.push_back(metric_decision(r, m, t));
        }
        const auto pos = std::count(members.begin(), members.end(), true);
        if (pos == 0 || pos == static_cast<long>(members.size())) continue;
        EXPECT_GE(balanced_accuracy(decisions, members),
                  oracle::best_scan_accuracy(values, members, higher_is_member(m)) - 1e-12);
      }
    }
  }
}

TEST(CalibrationTest, ThresholdsJsonRoundTrip) {
  Rng rng(15);
  const AttackThresholds t = calibrate_thresholds(random_records(80, 3, rng), 3);
  const AttackThresholds back = nlohmann::json(t).get<AttackThresholds>();
  EXPECT_EQ(back.per_class, t.per_class);
  EXPECT_EQ(back.global, t.global);
  EXPECT_EQ(back.flags, t.flags);
}

// Hand-built linear 2-class model: label 1 iff w.x + b > 0.
struct LinearModel {
  RowVector w;
  double b;
  int label(const RowVector& x) const { return w.dot(x) + b > 0.0 ? 1 : 0; }
  LabelOracle oracle() const {
    return [this](const Matrix& x) {
      std::vector<int> out;
      for (Eigen::Index r = 0; r < x.rows(); ++r) out.push_back(label(x.row(r)));
      return out;
    };
  }
  double distance(const RowVector& x) const { return std::abs(w.dot(x) + b) / w.norm(); }
};

TEST(LabelOnlyTest, LinearModelMatchesHyperplaneDistance) {
  Rng rng(16);
  LinearModel model{RowVector(6), 0.3};
  for (Eigen::Index i = 0; i < 6; ++i) model.w(i) = rng.normal();
  LabelOnlyConfig cfg;
  for (int i = 0; i < 50; ++i) {
    RowVector x(6);
    for (Eigen::Index j = 0; j < 6; ++j) x(j) = rng.normal();
    cfg.seed = static_cast<std::uint64_t>(i);
    const BoundaryDistance d = label_only_distance(model.oracle(), x, model.label(x), cfg);
    ASSERT_FALSE(d.at_ceiling);
    EXPECT_NEAR(d.distance, model.distance(x), 0.05 * model.distance(x) + cfg.tolerance);
  }
}

TEST(LabelOnlyTest, MisclassifiedIsZeroAndNoFlipIsCeiling) {
  LinearModel model{RowVector::Ones(3), 0.0};
  const RowVector x = RowVector::Ones(3);
  EXPECT_EQ(label_only_distance(model.oracle(), x, 0, {}).distance, 0.0);
  const LabelOracle constant = [](const Matrix& m) { return std::vector<int>(m.rows(), 1); };
  const BoundaryDistance d = label_only_distance(constant, x, 1, {});
  EXPECT_TRUE(d.at_ceiling);
  EXPECT_EQ(d.distance, LabelOnlyConfig{}.max_radius);
}

TEST(LabelOnlyTest, LargerBudgetNeverShrinksDistance) {
  Rng rng(17);
  for (int i = 0; i < 30; ++i) {
    LinearModel model{RowVector(4), rng.uniform(-3.0, 3.0)};
    for (Eigen::Index j = 0; j < 4; ++j) model.w(j) = rng.normal();
    RowVector x(4);
    for (Eigen::Index j = 0; j < 4; ++j) x(j) = rng.normal(0.0, 2.0);
    LabelOnlyConfig small;
    small.max_radius = 1.5;
    small.refine_iterations = 2;
    small.seed = static_cast<std::uint64_t>(i);
    LabelOnlyConfig large = small;
    large.max_radius = 3.0;
    const auto a = label_only_distance(model.oracle(), x, model.label(x), small);
    const auto b = label_only_distance(model.oracle(), x, model.label(x), large);
    if (!a.at_ceiling) {
      EXPECT_EQ(b.distance, a.distance);
    } else {
      EXPECT_GE(b.distance, a.distance - small.tolerance);
    }
  }
}

TEST(LabelOnlyTest, AttackRuleAndCalibration) {
  const auto d = label_only_attack({0.1, 0.5, 0.9}, 0.5);
  EXPECT_EQ(d, (std::vector<bool>{false, true, true}));
  const ThresholdFit fit = calibrate_label_only({0.1, 0.2, 0.8, 0.9}, {false, false, true, true});
  EXPECT_EQ(fit.balanced_accuracy, 1.0);
  EXPECT_GT(fit.threshold, 0.2);
  EXPECT_LT(fit.threshold, 0.8);
}

TEST(EvaluateTest, Examples) {
  const std::vector<bool> truth = {true, false, true, false};
  EXPECT_EQ(evaluate_attack(truth, truth), 1.0);
  EXPECT_EQ(evaluate_attack({false, true, false, true}, truth), 0.0);
  EXPECT_EQ(evaluate_attack({true, true, true, true}, truth), 0.5);
  EXPECT_THROW(evaluate_attack({}, {}), InvalidInput);
  EXPECT_THROW(evaluate_attack({true, true, true}, {true, true, false}), InvalidInput);
}

TEST(EvaluateTest, BalanceRecordsSubsamplesLargerSide) {
  Rng rng(18);
  std::vector<PosteriorRecord> records;
  for (int i = 0; i < 30; ++i) records.push_back(make_record({0.4, 0.6}, 1, i < 20));
  const auto a = balance_records(records, 5);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(count_members(a), 10u);
  const auto b = balance_records(records, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].is_member, b[i].is_member);
}

TEST(RecordIoTest, CsvRoundTripAndTruncation) {
  Rng rng(19);
  const auto records = random_records(25, 5, rng);
  const auto path = std::filesystem::temp_directory_path() / "cpa_mia_records.csv";
  write_records_csv(records, path, "memguard");
  const auto back = read_records_csv(path);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].posteriors, records[i].posteriors);
    EXPECT_EQ(back[i].true_label, records[i].true_label);
    EXPECT_EQ(back[i].is_member, records[i].is_member);
  }
  std::filesystem::remove(path);

  const PosteriorRecord r = make_record({0.1, 0.5, 0.15, 0.25}, 2, true);
  EXPECT_EQ(truncate_posteriors(r, 4).posteriors, r.posteriors);
  const PosteriorRecord top2 = truncate_posteriors(r, 2);
  EXPECT_NEAR(top2.posteriors[1], 0.5 / 0.75, 1e-12);
  EXPECT_NEAR(top2.posteriors[3], 0.25 / 0.75, 1e-12);
  EXPECT_EQ(top2.posteriors[2], 0.0);
  EXPECT_EQ(top2.predicted_label, 1);
}

TEST(SuiteTest, RunsRequestedAttacksOnBalancedSet) {
  Rng rng(20);
  const auto shadow = random_records(200, 3, rng);
  auto target = random_records(210, 3, rng);
  NnAttackConfig cfg;
  cfg.epochs = 5;
  const MiaResults none = run_posterior_attacks(shadow, target, 3, {}, cfg, 1);
  EXPECT_TRUE(none.accuracy.empty());
  const MiaResults all =
      run_posterior_attacks(shadow, target, 3, posterior_attack_names(), cfg, 1);
  EXPECT_EQ(all.accuracy.size(), 5u);
  EXPECT_EQ(all.eval_members, all.eval_nonmembers);
  for (const auto& [name, acc] : all.accuracy) {
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
  }
  EXPECT_THROW(run_posterior_attacks(shadow, target, 3, {"telepathy"}, cfg, 1), InvalidInput);
}

}  // namespace
}  // namespace cpa::mia
