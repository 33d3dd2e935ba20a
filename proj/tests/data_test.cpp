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
#include <map>
#include <numeric>
#include <set>

#include "cpa/data/augment.hpp"
#include "cpa/data/dataset.hpp"
#include "cpa/data/image.hpp"
#include "cpa/data/synthetic.hpp"
#include "gtest/gtest.h"

namespace cpa {
namespace {

std::vector<ImageSample> constant_samples(std::size_t n, int size = 4) {
  std::vector<ImageSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    ImageSample s = ImageSample::blank(3, size, size, 0.5);
    s.task_label = static_cast<int>(i % 2);
    s.sensitive_label = static_cast<int>((i / 2) % 2);
    out.push_back(s);
  }
  return out;
}

ImageSample random_image(int size, Rng& rng) {
  ImageSample s = ImageSample::blank(3, size, size);
  for (double& v : s.pixels) v = rng.uniform();
  s.task_label = 1;
  s.sensitive_label = 0;
  return s;
}

TEST(FourWaySplitTest, EightSamplesGiveTwoEach) {
  const DatasetBundle b = four_way_split(constant_samples(8), 0);
  for (Partition p : kAllPartitions) EXPECT_EQ(b.size(p), 2u);
  EXPECT_EQ(b.split.size(), 8u);
}

TEST(FourWaySplitTest, NineSamplesDistributeRemainder) {
  for (std::uint64_t seed : {0u, 1u, 2u, 99u}) {
    const DatasetBundle b = four_way_split(constant_samples(9), seed);
    std::vector<std::size_t> sizes;
    for (Partition p : kAllPartitions) sizes.push_back(b.size(p));
    std::sort(sizes.begin(), sizes.end());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 2, 3}));
    EXPECT_EQ(b.size(Partition::kTargetTrain), 3u);
  }
}

TEST(FourWaySplitTest, SameSeedSamePartitions) {
  const DatasetBundle a = four_way_split(constant_samples(100), 7);
  const DatasetBundle b = four_way_split(constant_samples(100), 7);
  EXPECT_EQ(a.split, b.split);
  const DatasetBundle c = four_way_split(constant_samples(100), 8);
  EXPECT_NE(a.split, c.split);
}

TEST(FourWaySplitTest, RejectsFewerThanFourSamples) {
  EXPECT_THROW(four_way_split(constant_samples(3), 0), InvalidInput);
}

TEST(FourWaySplitTest, PropertyDisjointCoveringBalanced) {
  Rng meta(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + meta.index(200);
    const std::uint64_t seed = meta.engine()();
    const DatasetBundle b = four_way_split(constant_samples(n), seed);
    ASSERT_EQ(b.split.size(), n);
    std::set<std::size_t> seen;
    std::size_t lo = n, hi = 0;
    for (Partition p : kAllPartitions) {
      const auto idx = b.indices(p);
      for (std::size_t i : idx) EXPECT_TRUE(seen.insert(i).second);
      lo = std::min(lo, idx.size());
      hi = std::max(hi, idx.size());
    }
    EXPECT_EQ(seen.size(), n);
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(FourWaySplitTest, TargetMembershipFollowsPartition) {
  const DatasetBundle b = four_way_split(constant_samples(12), 3);
  for (std::size_t i = 0; i < b.split.size(); ++i) {
    if (b.split[i] == Partition::kTargetTrain) {
      EXPECT_TRUE(b.is_target_member(i));
    } else if (b.split[i] == Partition::kTargetTest) {
      EXPECT_FALSE(b.is_target_member(i));
    } else {
      EXPECT_THROW(b.is_target_member(i), InvalidInput);
    }
  }
}

TEST(RescaleTest, SameSizeIsBitwiseIdentical) {
  Rng rng(1);
  const ImageSample img = random_image(96, rng);
  const ImageSample out = rescale(img, 96);
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(RescaleTest, ConstantImageStaysConstant) {
  const ImageSample img = ImageSample::blank(3, 32, 32, 0.37);
  const ImageSample out = rescale(img, 96);
  ASSERT_EQ(out.height, 96);
  ASSERT_EQ(out.width, 96);
  for (double v : out.pixels) EXPECT_EQ(v, 0.37);
}

TEST(RescaleTest, GradientMeanPreserved) {
  ImageSample img = ImageSample::blank(3, 32, 32);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) img.at(c, y, x) = (x + y) / 62.0;
  const double before =
      std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) / img.pixels.size();
  const ImageSample out = rescale(img, 64);
  const double after =
      std::accumulate(out.pixels.begin(), out.pixels.end(), 0.0) / out.pixels.size();
  EXPECT_NEAR(before, after, 1e-3);
  for (double v : out.pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(RescaleTest, RejectsNonPositiveSize) {
  const ImageSample img = ImageSample::blank(3, 8, 8, 0.1);
  EXPECT_THROW(rescale(img, 0), InvalidInput);
  EXPECT_THROW(rescale(img, -3), InvalidInput);
}

TEST(ValidateTest, RejectsOutOfRangePixels) {
  ImageSample img = ImageSample::blank(3, 4, 4, 0.5);
  img.pixels[3] = 1.5;
  EXPECT_THROW(validate(img), InvalidInput);
}

TEST(AugmentTest, IdentityConfigReturnsResizedOriginal) {
  Rng rng(5);
  const ImageSample img = random_image(12, rng);
  const AugmentationConfig cfg = AugmentationConfig::identity(16);
  Rng aug(3);
  const auto [a, b] = augment_pair(img, cfg, aug);
  const ImageSample expected = rescale(img, 16);
  EXPECT_EQ(a.pixels, expected.pixels);
  EXPECT_EQ(b.pixels, expected.pixels);
}

TEST(AugmentTest, DeterministicUnderSeed) {
  Rng rng(9);
  const ImageSample img = random_image(16, rng);
  AugmentationConfig cfg;
  Rng r1(42), r2(42);
  const auto p1 = augment_pair(img, cfg, r1);
  const auto p2 = augment_pair(img, cfg, r2);
  EXPECT_EQ(p1.first.pixels, p2.first.pixels);
  EXPECT_EQ(p1.second.pixels, p2.second.pixels);
}

TEST(AugmentTest, NonZeroStrengthGivesDistinctViews) {
  Rng rng(11);
  const ImageSample img = random_image(16, rng);
  AugmentationConfig cfg;
  Rng aug(1234);
  const auto [a, b] = augment_pair(img, cfg, aug);
  EXPECT_NE(a.pixels, b.pixels);
  EXPECT_EQ(a.height, cfg.output_size);
  EXPECT_EQ(b.width, cfg.output_size);
}

TEST(AugmentTest, ViewsInheritLabelsAndStayInRange) {
  Rng rng(77);
  AugmentationConfig cfg;
  cfg.color_jitter_strength = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    ImageSample img = random_image(16, rng);
    img.task_label = static_cast<int>(rng.index(5));
    img.sensitive_label = static_cast<int>(rng.index(3));
    const auto [a, b] = augment_pair(img, cfg, rng);
    EXPECT_EQ(a.task_label, img.task_label);
    EXPECT_EQ(b.task_label, img.task_label);
    EXPECT_EQ(a.sensitive_label, img.sensitive_label);
    EXPECT_EQ(b.sensitive_label, img.sensitive_label);
    EXPECT_NO_THROW(validate(a));
    EXPECT_NO_THROW(validate(b));
  }
}

TEST(AugmentTest, RejectsInvalidConfig) {
  Rng rng(1);
  const ImageSample img = random_image(8, rng);
  AugmentationConfig cfg;
  cfg.flip_probability = 1.5;
  EXPECT_THROW(augment_pair(img, cfg, rng), InvalidInput);
  cfg = AugmentationConfig{};
  cfg.output_size = 0;
  EXPECT_THROW(augment_pair(img, cfg, rng), InvalidInput);
}

TEST(SyntheticTest, CellsAreBalanced) {
  const DatasetBundle b = make_synthetic_dataset(16, 2, 2, 0);
  std::map<std::pair<int, int>, int> cells;
  for (const auto& s : b.samples) ++cells[{s.task_label, *s.sensitive_label}];
  ASSERT_EQ(cells.size(), 4u);
  for (const auto& [cell, count] : cells) EXPECT_EQ(count, 4);
}

TEST(SyntheticTest, UnevenCountsBalancedWithinOne) {
  const DatasetBundle b = make_synthetic_dataset(50, 3, 2, 4);
  std::map<std::pair<int, int>, int> cells;
  for (const auto& s : b.samples) ++cells[{s.task_label, *s.sensitive_label}];
  int lo = 1000, hi = 0;
  for (const auto& [cell, count] : cells) {
    lo = std::min(lo, count);
    hi = std::max(hi, count);
  }
  EXPECT_LE(hi - lo, 1);
}

TEST(SyntheticTest, RejectsInfeasibleBalance) {
  EXPECT_THROW(make_synthetic_dataset(15, 2, 2, 0), InvalidInput);
}

// Oracle: a ridge-regression linear probe on raw pixels, fitted in closed
// form. Pinned at seed 31: achieved held-out accuracy is 1.0.
TEST(SyntheticTest, LinearProbeRecoversAttributeFromPixels) {
  const DatasetBundle b = make_synthetic_dataset(800, 4, 2, 31);
  auto design = [&](Partition p, Matrix& x, Matrix& y) {
    const auto items = b.partition(p);
    x = to_batch(items);
    x.conservativeResize(Eigen::NoChange, x.cols() + 1);
    x.col(x.cols() - 1).setOnes();
    y = Matrix::Constant(static_cast<Eigen::Index>(items.size()), 2, -1.0);
    for (std::size_t i = 0; i < items.size(); ++i) {
      y(static_cast<Eigen::Index>(i), *items[i]->sensitive_label) = 1.0;
    }
  };
  Matrix xtr, ytr, xte, yte;
  design(Partition::kTargetTrain, xtr, ytr);
  design(Partition::kTargetTest, xte, yte);
  const Matrix gram =
      xtr.transpose() * xtr + 1.0 * Matrix::Identity(xtr.cols(), xtr.cols());
  const Matrix w = gram.ldlt().solve(xtr.transpose() * ytr);
  const Matrix scores = xte * w;
  int correct = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index pred, truth;
    scores.row(r).maxCoeff(&pred);
    yte.row(r).maxCoeff(&truth);
    correct += pred == truth;
  }
  const double accuracy = static_cast<double>(correct) / scores.rows();
  EXPECT_GT(accuracy, 0.9);
}

TEST(ManifestTest, RoundTripsImagesLabelsAndSplit) {
  const auto dir = std::filesystem::temp_directory_path() / "cpa_manifest_test";
  std::filesystem::remove_all(dir);
  const DatasetBundle b = make_synthetic_dataset(16, 2, 2, 3);
  save_manifest(b, dir);
  const DatasetBundle loaded = load_manifest(dir, 0, 999);
  ASSERT_EQ(loaded.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    EXPECT_EQ(loaded.ids[i], b.ids[i]);
    EXPECT_EQ(loaded.split[i], b.split[i]);
    EXPECT_EQ(loaded.samples[i].task_label, b.samples[i].task_label);
    EXPECT_EQ(loaded.samples[i].sensitive_label, b.samples[i].sensitive_label);
    for (std::size_t k = 0; k < b.samples[i].pixels.size(); ++k) {
      EXPECT_NEAR(loaded.samples[i].pixels[k], b.samples[i].pixels[k], 0.5 / 255.0 + 1e-12);
    }
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace cpa
