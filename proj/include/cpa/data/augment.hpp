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

#ifndef CPA_DATA_AUGMENT_HPP_
#define CPA_DATA_AUGMENT_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "cpa/core/error.hpp"
#include "cpa/core/rng.hpp"
#include "cpa/data/image.hpp"

namespace cpa {

// The three-stage view generator used for contrastive training: random
// resized crop with horizontal flip, colour distortion, Gaussian blur.
struct AugmentationConfig {
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double flip_probability = 0.5;
  // Brightness/contrast/saturation factors are drawn from
  // [1 - 0.8 s, 1 + 0.8 s], hue rotation from [-0.2 s, 0.2 s] turns.
  double color_jitter_strength = 0.5;
  // Kernel side as a fraction of output_size; 0 disables blur.
  double blur_kernel_fraction = 0.1;
  double blur_probability = 0.5;
  int output_size = 16;

  void validate() const {
    require(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0,
            "augmentation: crop scale range must satisfy 0 < min <= max <= 1");
    require(flip_probability >= 0.0 && flip_probability <= 1.0,
            "augmentation: flip probability must be in [0, 1]");
    require(blur_probability >= 0.0 && blur_probability <= 1.0,
            "augmentation: blur probability must be in [0, 1]");
    require(color_jitter_strength >= 0.0, "augmentation: jitter strength must be >= 0");
    require(blur_kernel_fraction >= 0.0 && blur_kernel_fraction <= 1.0,
            "augmentation: blur kernel fraction must be in [0, 1]");
    require(output_size > 0, "augmentation: output size must be positive");
  }

  static AugmentationConfig identity(int output_size) {
    AugmentationConfig c;
    c.crop_scale_min = 1.0;
    c.crop_scale_max = 1.0;
    c.flip_probability = 0.0;
    c.color_jitter_strength = 0.0;
    c.blur_kernel_fraction = 0.0;
    c.output_size = output_size;
    return c;
  }
};

namespace detail {

inline ImageSample random_resized_crop(const ImageSample& src, const AugmentationConfig& cfg,
                                       Rng& rng) {
  const double area = static_cast<double>(src.height) * src.width;
  double crop_h = src.height;
  double crop_w = src.width;
  double y0 = 0.0;
  double x0 = 0.0;
  if (cfg.crop_scale_min < 1.0) {
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double target = area * rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
      const double log_ratio = rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0));
      const double ratio = std::exp(log_ratio);
      const double w = std::sqrt(target * ratio);
      const double h = std::sqrt(target / ratio);
      if (w <= src.width && h <= src.height && w >= 1.0 && h >= 1.0) {
        crop_w = w;
        crop_h = h;
        y0 = rng.uniform(0.0, src.height - h);
        x0 = rng.uniform(0.0, src.width - w);
        break;
      }
    }
  }
  if (crop_h == src.height && crop_w == src.width && src.height == cfg.output_size &&
      src.width == cfg.output_size) {
    return src;
  }
  return resample_window(src, y0, x0, crop_h, crop_w, cfg.output_size, cfg.output_size);
}

inline void horizontal_flip(ImageSample& img) {
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width / 2; ++x) {
        std::swap(img.at(c, y, x), img.at(c, y, img.width - 1 - x));
      }
    }
  }
}

inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

inline void color_jitter(ImageSample& img, double strength, Rng& rng) {
  if (img.channels != 3 || strength <= 0.0) return;
  const double spread = 0.8 * strength;
  const double brightness = rng.uniform(std::max(0.0, 1.0 - spread), 1.0 + spread);
  const double contrast = rng.uniform(std::max(0.0, 1.0 - spread), 1.0 + spread);
  const double saturation = rng.uniform(std::max(0.0, 1.0 - spread), 1.0 + spread);
  const double hue_turns = rng.uniform(-0.2 * strength, 0.2 * strength);

  const int hw = img.height * img.width;
  double* r = img.pixels.data();
  double* g = r + hw;
  double* b = g + hw;

  for (int i = 0; i < hw; ++i) {
    r[i] = std::clamp(r[i] * brightness, 0.0, 1.0);
    g[i] = std::clamp(g[i] * brightness, 0.0, 1.0);
    b[i] = std::clamp(b[i] * brightness, 0.0, 1.0);
  }
  double mean_luma = 0.0;
  for (int i = 0; i < hw; ++i) mean_luma += luma(r[i], g[i], b[i]);
  mean_luma /= hw;
  for (int i = 0; i < hw; ++i) {
    r[i] = std::clamp(mean_luma + contrast * (r[i] - mean_luma), 0.0, 1.0);
    g[i] = std::clamp(mean_luma + contrast * (g[i] - mean_luma), 0.0, 1.0);
    b[i] = std::clamp(mean_luma + contrast * (b[i] - mean_luma), 0.0, 1.0);
  }
  for (int i = 0; i < hw; ++i) {
    const double y = luma(r[i], g[i], b[i]);
    r[i] = std::clamp(y + saturation * (r[i] - y), 0.0, 1.0);
    g[i] = std::clamp(y + saturation * (g[i] - y), 0.0, 1.0);
    b[i] = std::clamp(y + saturation * (b[i] - y), 0.0, 1.0);
  }
  // Hue: rotate the chroma plane of YIQ.
  const double angle = 2.0 * std::numbers::pi * hue_turns;
  const double cs = std::cos(angle);
  const double sn = std::sin(angle);
  for (int i = 0; i < hw; ++i) {
    const double y = luma(r[i], g[i], b[i]);
    const double ci = 0.596 * r[i] - 0.274 * g[i] - 0.322 * b[i];
    const double cq = 0.211 * r[i] - 0.523 * g[i] + 0.312 * b[i];
    const double ri = cs * ci - sn * cq;
    const double rq = sn * ci + cs * cq;
    r[i] = std::clamp(y + 0.956 * ri + 0.621 * rq, 0.0, 1.0);
    g[i] = std::clamp(y - 0.272 * ri - 0.647 * rq, 0.0, 1.0);
    b[i] = std::clamp(y - 1.106 * ri + 1.703 * rq, 0.0, 1.0);
  }
}

inline void gaussian_blur(ImageSample& img, int kernel, double sigma) {
  if (kernel < 3) return;
  if (kernel % 2 == 0) ++kernel;
  const int half = kernel / 2;
  std::vector<double> weights(static_cast<std::size_t>(kernel));
  double total = 0.0;
  for (int k = -half; k <= half; ++k) {
    weights[static_cast<std::size_t>(k + half)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += weights[static_cast<std::size_t>(k + half)];
  }
  for (double& w : weights) w /= total;

  ImageSample tmp = img;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) {
          const int xx = std::clamp(x + k, 0, img.width - 1);
          acc += weights[static_cast<std::size_t>(k + half)] * img.at(c, y, xx);
        }
        tmp.at(c, y, x) = acc;
      }
    }
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) {
          const int yy = std::clamp(y + k, 0, img.height - 1);
          acc += weights[static_cast<std::size_t>(k + half)] * tmp.at(c, yy, x);
        }
        img.at(c, y, x) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
}

}  // namespace detail

inline ImageSample augment_view(const ImageSample& sample, const AugmentationConfig& cfg,
                                Rng& rng) {
  ImageSample view = detail::random_resized_crop(sample, cfg, rng);
  if (cfg.flip_probability > 0.0 && rng.bernoulli(cfg.flip_probability)) {
    detail::horizontal_flip(view);
  }
  detail::color_jitter(view, cfg.color_jitter_strength, rng);
  if (cfg.blur_kernel_fraction > 0.0 && rng.bernoulli(cfg.blur_probability)) {
    const int kernel = static_cast<int>(std::lround(cfg.blur_kernel_fraction * cfg.output_size));
    detail::gaussian_blur(view, kernel, rng.uniform(0.1, 2.0));
  }
  view.task_label = sample.task_label;
  view.sensitive_label = sample.sensitive_label;
  return view;
}

// Two independent views of one sample; both keep the source labels.
inline std::pair<ImageSample, ImageSample> augment_pair(const ImageSample& sample,
                                                        const AugmentationConfig& cfg,
                                                        Rng& rng) {
  cfg.validate();
  validate(sample);
  ImageSample first = augment_view(sample, cfg, rng);
  ImageSample second = augment_view(sample, cfg, rng);
  return {std::move(first), std::move(second)};
}

}  // namespace cpa

#endif  // CPA_DATA_AUGMENT_HPP_
