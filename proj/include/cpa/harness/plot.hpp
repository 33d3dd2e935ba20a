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

// Report emission, including PNG charts. Requires linking libpng.

#ifndef CPA_HARNESS_PLOT_HPP_
#define CPA_HARNESS_PLOT_HPP_

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "cpa/core/error.hpp"
#include "cpa/harness/report.hpp"

namespace cpa::harness {

using Rgb = std::array<unsigned char, 3>;

class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255})
      : width_(width), height_(height),
        pixels_(static_cast<std::size_t>(width * height), background) {
    require(width > 0 && height > 0, "canvas: dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const Rgb& at(int x, int y) const { return pixels_[static_cast<std::size_t>(y * width_ + x)]; }

  void set(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < width_ && y < height_) {
      pixels_[static_cast<std::size_t>(y * width_ + x)] = c;
    }
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y < std::min(height_, y1); ++y) {
      for (int x = std::max(0, x0); x < std::min(width_, x1); ++x) set(x, y, c);
    }
  }

  void hline(int x0, int x1, int y, Rgb c) { fill_rect(x0, y, x1, y + 1, c); }
  void vline(int x, int y0, int y1, Rgb c) { fill_rect(x, y0, x + 1, y1, c); }

  void write_png(const std::filesystem::path& path) const {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (fp == nullptr) throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      std::fclose(fp);
      throw IoError("failed encoding " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width_), static_cast<png_uint_32>(height_), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(width_) * 3);
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const Rgb& c = at(x, y);
        std::copy(c.begin(), c.end(), row.begin() + static_cast<std::ptrdiff_t>(3 * x));
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("failed writing " + path.string());
  }

 private:
  int width_;
  int height_;
  std::vector<Rgb> pixels_;
};

inline Rgb palette(std::size_t i) {
  static const std::array<Rgb, 8> colors = {{{31, 119, 180},
                                             {255, 127, 14},
                                             {44, 160, 44},
                                             {214, 39, 40},
                                             {148, 103, 189},
                                             {140, 86, 75},
                                             {227, 119, 194},
                                             {127, 127, 127}}};
  return colors[i % colors.size()];
}

namespace detail {

constexpr int kMargin = 20;
constexpr Rgb kAxis = {0, 0, 0};
constexpr Rgb kGrid = {225, 225, 225};

inline void axes(Canvas& c) {
  for (int t = 0; t <= 4; ++t) {
    const int y = c.height() - kMargin - t * (c.height() - 2 * kMargin) / 4;
    c.hline(kMargin, c.width() - kMargin, y, kGrid);
  }
  c.hline(kMargin, c.width() - kMargin, c.height() - kMargin, kAxis);
  c.vline(kMargin, kMargin, c.height() - kMargin, kAxis);
}

inline int to_y(const Canvas& c, double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return c.height() - kMargin -
         static_cast<int>(std::lround(clamped * (c.height() - 2 * kMargin)));
}

}  // namespace detail

// Grouped bars: one group per attack, one colour per deployment (undefended
// first, then each defense).
inline Canvas attack_bar_chart(const AuditReport& r, int width = 640, int height = 360) {
  Canvas c(width, height);
  detail::axes(c);
  std::vector<const ModelResult*> series = {&r.undefended};
  for (const auto& [name, m] : r.defenses) series.push_back(&m);
  std::set<std::string> attacks;
  for (const ModelResult* m : series) {
    for (const auto& [a, v] : m->attacks) attacks.insert(a);
  }
  if (attacks.empty()) return c;
  const int plot_w = width - 2 * detail::kMargin;
  const int group_w = plot_w / static_cast<int>(attacks.size());
  const int bar_w = std::max(1, (group_w - 8) / static_cast<int>(series.size()));
  int g = 0;
  for (const std::string& a : attacks) {
    for (std::size_t s = 0; s < series.size(); ++s) {
      auto it = series[s]->attacks.find(a);
      if (it == series[s]->attacks.end()) continue;
      const int x0 = detail::kMargin + g * group_w + 4 + static_cast<int>(s) * bar_w;
      c.fill_rect(x0, detail::to_y(c, it->second), x0 + bar_w - 1, height - detail::kMargin,
                  palette(s));
    }
    ++g;
  }
  // Chance level.
  c.hline(detail::kMargin, width - detail::kMargin, detail::to_y(c, 0.5), {120, 120, 120});
  return c;
}

// Overfitting level (x) against each membership attack's accuracy (y).
inline Canvas overfitting_scatter(const AuditReport& r, int width = 480, int height = 360) {
  Canvas c(width, height);
  detail::axes(c);
  std::vector<const ModelResult*> series = {&r.undefended};
  for (const auto& [name, m] : r.defenses) series.push_back(&m);
  const int plot_w = width - 2 * detail::kMargin;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const int x = detail::kMargin + static_cast<int>(std::lround(
                                        std::clamp(series[s]->overfitting_level, 0.0, 1.0) *
                                        plot_w));
    for (const auto& [a, v] : series[s]->attacks) {
      if (a == "attribute") continue;
      const int y = detail::to_y(c, v);
      c.fill_rect(x - 3, y - 3, x + 4, y + 4, palette(s));
    }
  }
  return c;
}

// Member (left bar of each bin) and non-member (right bar) loss counts.
inline Canvas loss_histogram_chart(const LossHistogram& h, int width = 640, int height = 360) {
  Canvas c(width, height);
  detail::axes(c);
  const std::size_t bins = h.members.size();
  if (bins == 0) return c;
  std::size_t peak = 1;
  for (std::size_t b = 0; b < bins; ++b) peak = std::max({peak, h.members[b], h.nonmembers[b]});
  const int plot_w = width - 2 * detail::kMargin;
  const int bin_w = std::max(2, plot_w / static_cast<int>(bins));
  for (std::size_t b = 0; b < bins; ++b) {
    const int x0 = detail::kMargin + static_cast<int>(b) * bin_w + 1;
    const double m = static_cast<double>(h.members[b]) / static_cast<double>(peak);
    const double n = static_cast<double>(h.nonmembers[b]) / static_cast<double>(peak);
    c.fill_rect(x0, detail::to_y(c, m), x0 + bin_w / 2, height - detail::kMargin, palette(0));
    c.fill_rect(x0 + bin_w / 2, detail::to_y(c, n), x0 + bin_w - 1, height - detail::kMargin,
                palette(1));
  }
  return c;
}

// Writes report.json and report.csv, plus the charts when "png" is listed.
// Refuses reports whose config hash does not match their config.
inline std::vector<std::filesystem::path> emit_report(const AuditReport& r,
                                                      const std::filesystem::path& dir,
                                                      const std::set<std::string>& formats) {
  check_integrity(r);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written = {dir / "report.json", dir / "report.csv"};
  write_json(r, written[0]);
  write_report_csv(r, written[1]);
  if (formats.count("png")) {
    written.push_back(dir / "attack_accuracy.png");
    attack_bar_chart(r).write_png(written.back());
    written.push_back(dir / "overfitting_scatter.png");
    overfitting_scatter(r).write_png(written.back());
    written.push_back(dir / "loss_histogram.png");
    loss_histogram_chart(r.undefended.loss_histogram).write_png(written.back());
  }
  return written;
}

}  // namespace cpa::harness

#endif  // CPA_HARNESS_PLOT_HPP_
