#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnnprobe/fileio.hpp"
#include "cnnprobe/netspec.hpp"
#include "cnnprobe/tensor.hpp"

namespace cnnprobe {

// 8-bit RGB raster, interleaved, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int row, int col, int ch) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
  std::uint8_t at(int row, int col, int ch) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PPM (P6, maxval 255). Header comments are accepted.
Image decode_ppm(std::span<const std::uint8_t> bytes);
Bytes encode_ppm(const Image& image);

// PNG support is compiled in when libpng is available.
bool png_supported();
Image decode_png(std::span<const std::uint8_t> bytes);
Bytes encode_png(const Image& image);

// Chooses the codec from the file's magic bytes.
Image read_image(const std::string& path);
// Chooses the codec from the extension: ".png" writes PNG, anything else PPM.
Bytes encode_image_for(const std::string& path, const Image& image);
void write_image(const std::string& path, const Image& image);

Image resize_nearest(const Image& image, int height, int width);

// (C, H, W) float tensor with values in [0, 255]. channels = 1 averages RGB.
Tensor image_to_tensor(const Image& image, int channels = 3);

// Copies rect out of image; parts of rect outside the image are filled.
Image crop_padded(const Image& image, const PixelRect& rect, std::uint8_t fill = 128);

// Lays equally sized tiles out row by row, `cols` per row, with `gap` pixels
// of the fill colour between them.
Image tile_images(const std::vector<Image>& tiles, int cols, int gap = 0, std::uint8_t fill = 255);

}  // namespace cnnprobe
