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

#ifndef CPA_DATA_SYNTHETIC_HPP_
#define CPA_DATA_SYNTHETIC_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/data/dataset.hpp"
#include "cpa/data/image.hpp"

namespace cpa {

// Knobs for the synthetic benchmark. The task label picks where a bright
// blob sits (classes spaced on a ring around the centre); the sensitive
// attribute picks the blob's hue (attributes spaced evenly on the colour
// wheel). Both are linearly recoverable from raw pixels.
struct SyntheticOptions {
  int image_size = 16;
  double pixel_noise = 0.08;
  // Fraction of samples whose blob is drawn at another class's position
  // while keeping the assigned label. Labels stay balanced.
  double label_noise = 0.0;
  double hue_jitter = 0.03;
  // Blob saturation; lower values weaken the attribute signal.
  double saturation = 0.85;
  double position_jitter = 1.0;
  double blob_radius = 2.5;
};

namespace detail {

inline void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);
  const double sector = h * 6.0;
  const int i = static_cast<int>(std::floor(sector)) % 6;
  const double f = sector - std::floor(sector);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

inline ImageSample render_synthetic(int visual_class, int num_classes, int attribute,
                                    int num_attributes, const SyntheticOptions& opt,
                                    Rng& rng) {
  const int size = opt.image_size;
  ImageSample img = ImageSample::blank(3, size, size);
  const double background = rng.uniform(0.25, 0.45);

  const double centre = 0.5 * (size - 1);
  const double ring = 0.28 * size;
  const double angle = 2.0 * std::numbers::pi * visual_class / num_classes;
  const double cy = centre + ring * std::sin(angle) + rng.normal(0.0, opt.position_jitter);
  const double cx = centre + ring * std::cos(angle) + rng.normal(0.0, opt.position_jitter);

  double rgb[3];
  const double hue = static_cast<double>(attribute) / num_attributes + 0.05 +
                     rng.normal(0.0, opt.hue_jitter);
  hsv_to_rgb(hue, opt.saturation, rng.uniform(0.75, 1.0), rgb);

  const double radius = opt.blob_radius * rng.uniform(0.85, 1.15);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      const double mask = std::exp(-0.5 * d2 / (radius * radius));
      for (int c = 0; c < 3; ++c) {
        const double v = background + mask * (rgb[c] - background) +
                         rng.normal(0.0, opt.pixel_noise);
        img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace detail

// Balanced synthetic benchmark: every (class, attribute) cell receives
// n / (classes * attributes) samples, remainder to the earliest cells.
inline DatasetBundle make_synthetic_dataset(std::size_t n, int num_classes, int num_attributes,
                                            std::uint64_t seed,
                                            const SyntheticOptions& options = {}) {
  require(num_classes >= 1 && num_attributes >= 1,
          "make_synthetic_dataset: need at least one class and one attribute");
  const std::size_t cells = static_cast<std::size_t>(num_classes) * num_attributes;
  if (n < 4 * cells) {
    throw InvalidInput("make_synthetic_dataset: n must be at least 4 * classes * attributes");
  }
  require(options.image_size >= 4, "make_synthetic_dataset: image size must be >= 4");
  require(options.saturation >= 0.0 && options.saturation <= 1.0,
          "make_synthetic_dataset: saturation must be in [0, 1]");
  require(options.label_noise >= 0.0 && options.label_noise <= 1.0,
          "make_synthetic_dataset: label noise must be in [0, 1]");

  Rng rng(mix_seed(seed, stream::kSynthetic));
  std::vector<ImageSample> samples;
  samples.reserve(n);
  const std::size_t per_cell = n / cells;
  const std::size_t remainder = n % cells;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const int label = static_cast<int>(cell / num_attributes);
    const int attribute = static_cast<int>(cell % num_attributes);
    const std::size_t count = per_cell + (cell < remainder ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k) {
      int visual = label;
      if (num_classes > 1 && rng.bernoulli(options.label_noise)) {
        visual = static_cast<int>((label + 1 + rng.index(num_classes - 1)) % num_classes);
      }
      ImageSample s =
          detail::render_synthetic(visual, num_classes, attribute, num_attributes, options, rng);
      s.task_label = label;
      s.sensitive_label = attribute;
      samples.push_back(std::move(s));
    }
  }
  DatasetBundle bundle = four_way_split(std::move(samples), seed);
  bundle.num_classes = num_classes;
  bundle.num_attributes = num_attributes;
  return bundle;
}

}  // namespace cpa

#endif  // CPA_DATA_SYNTHETIC_HPP_
