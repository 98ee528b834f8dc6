#include "cnnprobe/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "cnnprobe/error.hpp"

namespace cnnprobe {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}, {255, 127, 14}};

void put(Image& img, int r, int c, const Rgb& rgb) {
  if (r < 0 || c < 0 || r >= img.height || c >= img.width) return;
  for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = rgb[ch];
}

void line(Image& img, int r0, int c0, int r1, int c1, const Rgb& rgb) {
  const int dc = std::abs(c1 - c0), dr = -std::abs(r1 - r0);
  const int sc = c0 < c1 ? 1 : -1, sr = r0 < r1 ? 1 : -1;
  int err = dc + dr;
  for (;;) {
    put(img, r0, c0, rgb);
    if (r0 == r1 && c0 == c1) break;
    const int e2 = 2 * err;
    if (e2 >= dr) {
      err += dr;
      c0 += sc;
    }
    if (e2 <= dc) {
      err += dc;
      r0 += sr;
    }
  }
}

}  // namespace

Image render_line_plot(const std::vector<std::vector<double>>& series, int width, int height,
                       double y_min, double y_max) {
  if (width < 32 || height < 32) throw ShapeError("plot must be at least 32x32");
  if (!(y_max > y_min)) throw ShapeError("plot y range is empty");
  Image img(width, height, 255);
  const int margin = 16;
  const int left = margin, right = width - margin, top = margin, bottom = height - margin;

  auto y_px = [&](double v) {
    const double t = std::clamp((v - y_min) / (y_max - y_min), 0.0, 1.0);
    return static_cast<int>(std::lround(bottom - t * (bottom - top)));
  };
  for (int q = 1; q <= 4; ++q) {
    line(img, y_px(y_min + q * (y_max - y_min) / 4), left, y_px(y_min + q * (y_max - y_min) / 4), right,
         {220, 220, 220});
  }
  line(img, bottom, left, bottom, right, {0, 0, 0});
  line(img, top, left, bottom, left, {0, 0, 0});

  std::size_t points = 0;
  for (const auto& s : series) points = std::max(points, s.size());
  auto x_px = [&](std::size_t i) {
    if (points <= 1) return (left + right) / 2;
    return static_cast<int>(std::lround(left + static_cast<double>(i) * (right - left) / (points - 1)));
  };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Rgb& rgb = kPalette[k % std::size(kPalette)];
    const auto& s = series[k];
    for (std::size_t i = 0; i < s.size(); ++i) {
      const int x = x_px(i), y = y_px(s[i]);
      if (i > 0) line(img, y_px(s[i - 1]), x_px(i - 1), y, x, rgb);
      for (int dr = -2; dr <= 2; ++dr) {
        for (int dc = -2; dc <= 2; ++dc) put(img, y + dr, x + dc, rgb);
      }
    }
  }
  return img;
}

}  // namespace cnnprobe
