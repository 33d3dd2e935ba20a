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

#ifndef CPA_DATA_IMAGE_HPP_
#define CPA_DATA_IMAGE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpa/core/error.hpp"
#include "cpa/core/types.hpp"

namespace cpa {

// One labelled image, channel-major (C, H, W) with values in [0, 1].
struct ImageSample {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<double> pixels;
  int task_label = 0;
  std::optional<int> sensitive_label;

  std::size_t size() const { return pixels.size(); }

  double& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  static ImageSample blank(int channels, int height, int width, double fill = 0.0) {
    ImageSample s;
    s.channels = channels;
    s.height = height;
    s.width = width;
    s.pixels.assign(static_cast<std::size_t>(channels) * height * width, fill);
    return s;
  }
};

// Throws InvalidInput unless the sample satisfies the ImageSample invariants.
// Label ranges are only checked when a bound is supplied (> 0).
inline void validate(const ImageSample& s, int num_classes = 0, int num_attributes = 0) {
  require(s.channels > 0 && s.height > 0 && s.width > 0, "image dimensions must be positive");
  require(s.pixels.size() == static_cast<std::size_t>(s.channels) * s.height * s.width,
          "pixel buffer does not match image dimensions");
  for (double v : s.pixels) {
    require(v >= 0.0 && v <= 1.0, "pixel values must lie in [0, 1]");
  }
  require(s.task_label >= 0 && (num_classes <= 0 || s.task_label < num_classes),
          "task label out of range");
  if (s.sensitive_label) {
    require(*s.sensitive_label >= 0 &&
                (num_attributes <= 0 || *s.sensitive_label < num_attributes),
            "sensitive label out of range");
  }
}

// Bilinear resampling of the window [y0, y0+h) x [x0, x0+w) of `src` to an
// out_h x out_w grid, using half-pixel centres and edge clamping.
inline ImageSample resample_window(const ImageSample& src, double y0, double x0, double h,
                                   double w, int out_h, int out_w) {
  ImageSample out = ImageSample::blank(src.channels, out_h, out_w);
  out.task_label = src.task_label;
  out.sensitive_label = src.sensitive_label;
  const double sy = h / out_h;
  const double sx = w / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = y0 + (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int iy0 = static_cast<int>(std::floor(fy));
    const int iy1 = std::min(iy0 + 1, src.height - 1);
    const double ty = fy - iy0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = x0 + (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const int ix0 = static_cast<int>(std::floor(fx));
      const int ix1 = std::min(ix0 + 1, src.width - 1);
      const double tx = fx - ix0;
      for (int c = 0; c < src.channels; ++c) {
        // lerp written as a + t (b - a) so constant regions stay exact.
        const double top = src.at(c, iy0, ix0) + tx * (src.at(c, iy0, ix1) - src.at(c, iy0, ix0));
        const double bot = src.at(c, iy1, ix0) + tx * (src.at(c, iy1, ix1) - src.at(c, iy1, ix0));
        out.at(c, oy, ox) = std::clamp(top + ty * (bot - top), 0.0, 1.0);
      }
    }
  }
  return out;
}

// Resizes to size x size. Same-size inputs are returned unchanged.
inline ImageSample rescale(const ImageSample& sample, int size) {
  if (size <= 0) throw InvalidInput("rescale: size must be positive");
  validate(sample);
  if (sample.height == size && sample.width == size) return sample;
  return resample_window(sample, 0.0, 0.0, sample.height, sample.width, size, size);
}

// Stacks samples as rows of a batch matrix.
inline Matrix to_batch(std::span<const ImageSample> samples) {
  if (samples.empty()) return Matrix(0, 0);
  const auto dim = static_cast<Eigen::Index>(samples.front().size());
  Matrix batch(static_cast<Eigen::Index>(samples.size()), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<Eigen::Index>(samples[i].size()) != dim) {
      throw InvalidInput("to_batch: samples have different shapes");
    }
    batch.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const RowVector>(samples[i].pixels.data(), dim);
  }
  return batch;
}

inline Matrix to_batch(const std::vector<const ImageSample*>& samples) {
  if (samples.empty()) return Matrix(0, 0);
  const auto dim = static_cast<Eigen::Index>(samples.front()->size());
  Matrix batch(static_cast<Eigen::Index>(samples.size()), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<Eigen::Index>(samples[i]->size()) != dim) {
      throw InvalidInput("to_batch: samples have different shapes");
    }
    batch.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const RowVector>(samples[i]->pixels.data(), dim);
  }
  return batch;
}

// Binary PPM (P6, 8-bit). Three-channel images only.
inline void write_ppm(const ImageSample& s, const std::filesystem::path& path) {
  if (s.channels != 3) throw InvalidInput("write_ppm: expected 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << s.width << " " << s.height << "\n255\n";
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const auto byte = static_cast<unsigned char>(std::lround(s.at(c, y, x) * 255.0));
        out.put(static_cast<char>(byte));
      }
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

inline ImageSample read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    int v = 0;
    in >> v;
    return v;
  };
  const int width = next_int();
  const int height = next_int();
  const int maxval = next_int();
  in.get();
  if (!in || width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  ImageSample s = ImageSample::blank(3, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int byte = in.get();
        if (byte == EOF) throw IoError(path.string() + ": truncated pixel data");
        s.at(c, y, x) = static_cast<double>(byte) / maxval;
      }
    }
  }
  return s;
}

}  // namespace cpa

#endif  // CPA_DATA_IMAGE_HPP_
