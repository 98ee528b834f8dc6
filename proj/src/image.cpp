#include "cnnprobe/image.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <limits>

#ifdef CNNPROBE_HAVE_PNG
#include <png.h>
#endif

#include "cnnprobe/error.hpp"

namespace cnnprobe {

namespace {

[[noreturn]] void malformed(const std::string& what) {
  throw IoError(IoError::Kind::kMalformedImage, "malformed PPM: " + what);
}

// Reads one header integer, skipping whitespace and '#' comments.
long long read_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* what) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= bytes.size()) malformed(std::string("missing ") + what);
  if (!std::isdigit(bytes[pos])) malformed(std::string("non-numeric ") + what);
  long long v = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos] - '0');
    if (v > std::numeric_limits<int>::max()) {
      throw IoError(IoError::Kind::kDimOverflow, std::string("PPM ") + what + " too large");
    }
    ++pos;
  }
  return v;
}

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '1' && bytes[1] <= '7') {
      throw IoError(IoError::Kind::kUnsupportedImage, "only binary RGB PPM (P6) is supported");
    }
    malformed("bad magic");
  }
  std::size_t pos = 2;
  if (pos >= bytes.size() || !(std::isspace(bytes[pos]) || bytes[pos] == '#')) malformed("bad magic");
  const long long width = read_header_int(bytes, pos, "width");
  const long long height = read_header_int(bytes, pos, "height");
  const long long maxval = read_header_int(bytes, pos, "maxval");
  if (width < 1 || height < 1) malformed("dimensions must be >= 1");
  if (maxval != 255) {
    throw IoError(IoError::Kind::kUnsupportedImage,
                  "unsupported PPM maxval " + std::to_string(maxval) + " (only 255)");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) malformed("missing separator before pixel data");
  ++pos;
  const unsigned long long need = static_cast<unsigned long long>(width) * height * 3;
  const std::size_t avail = bytes.size() - pos;
  if (need > avail) {
    throw IoError(IoError::Kind::kTruncated, "PPM pixel data truncated: need " + std::to_string(need) +
                                                 " bytes, have " + std::to_string(avail));
  }
  Image img(static_cast<int>(width), static_cast<int>(height));
  std::memcpy(img.pixels.data(), bytes.data() + pos, need);
  return img;
}

Bytes encode_ppm(const Image& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

#ifdef CNNPROBE_HAVE_PNG

bool png_supported() { return true; }

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw IoError(IoError::Kind::kMalformedImage, std::string("malformed PNG: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  if (png.width < 1 || png.height < 1 || png.width > 1u << 15 || png.height > 1u << 15) {
    png_image_free(&png);
    throw IoError(IoError::Kind::kDimOverflow, "PNG dimensions out of range");
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    throw IoError(IoError::Kind::kMalformedImage, std::string("malformed PNG: ") + png.message);
  }
  return img;
}

Bytes encode_png(const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw IoError(IoError::Kind::kOpen, std::string("PNG encode failed: ") + png.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw IoError(IoError::Kind::kOpen, std::string("PNG encode failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

#else

bool png_supported() { return false; }

Image decode_png(std::span<const std::uint8_t>) {
  throw IoError(IoError::Kind::kUnsupportedImage, "built without PNG support");
}

Bytes encode_png(const Image&) {
  throw IoError(IoError::Kind::kUnsupportedImage, "built without PNG support");
}

#endif

Image read_image(const std::string& path) {
  const Bytes bytes = read_file(path);
  static constexpr std::uint8_t kPngMagic[] = {0x89, 'P', 'N', 'G'};
  try {
    if (bytes.size() >= 4 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin())) {
      return decode_png(bytes);
    }
    return decode_ppm(bytes);
  } catch (const IoError& e) {
    throw IoError(e.kind(), path + ": " + e.what());
  }
}

Bytes encode_image_for(const std::string& path, const Image& image) {
  const bool png = path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0;
  return png ? encode_png(image) : encode_ppm(image);
}

void write_image(const std::string& path, const Image& image) {
  write_file_atomic(path, encode_image_for(path, image));
}

Image resize_nearest(const Image& image, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("resize target must be at least 1x1");
  if (image.height == height && image.width == width) return image;
  Image out(width, height);
  for (int r = 0; r < height; ++r) {
    const int sr = static_cast<int>((static_cast<long long>(r) * image.height) / height);
    for (int c = 0; c < width; ++c) {
      const int sc = static_cast<int>((static_cast<long long>(c) * image.width) / width);
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = image.at(sr, sc, ch);
    }
  }
  return out;
}

Tensor image_to_tensor(const Image& image, int channels) {
  if (channels != 1 && channels != 3) {
    throw ShapeError("images convert to 1 or 3 channels, not " + std::to_string(channels));
  }
  Tensor t({channels, image.height, image.width});
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      if (channels == 3) {
        for (int ch = 0; ch < 3; ++ch) t.at(ch, r, c) = image.at(r, c, ch);
      } else {
        t.at(0, r, c) = (static_cast<float>(image.at(r, c, 0)) + image.at(r, c, 1) + image.at(r, c, 2)) / 3.0f;
      }
    }
  }
  return t;
}

Image crop_padded(const Image& image, const PixelRect& rect, std::uint8_t fill) {
  Image out(rect.width, rect.height, fill);
  for (int r = 0; r < rect.height; ++r) {
    const int sr = rect.row + r;
    if (sr < 0 || sr >= image.height) continue;
    for (int c = 0; c < rect.width; ++c) {
      const int sc = rect.col + c;
      if (sc < 0 || sc >= image.width) continue;
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = image.at(sr, sc, ch);
    }
  }
  return out;
}

Image tile_images(const std::vector<Image>& tiles, int cols, int gap, std::uint8_t fill) {
  if (tiles.empty()) return Image();
  if (cols < 1) throw ShapeError("tile layout needs at least one column");
  const int tw = tiles.front().width, th = tiles.front().height;
  for (const Image& t : tiles) {
    if (t.width != tw || t.height != th) throw ShapeError("tiles must share one size");
  }
  const int n = static_cast<int>(tiles.size());
  const int used_cols = std::min(cols, n);
  const int rows = (n + cols - 1) / cols;
  Image out(used_cols * tw + (used_cols - 1) * gap, rows * th + (rows - 1) * gap, fill);
  for (int i = 0; i < n; ++i) {
    const int r0 = (i / cols) * (th + gap), c0 = (i % cols) * (tw + gap);
    for (int r = 0; r < th; ++r) {
      std::memcpy(&out.at(r0 + r, c0, 0), tiles[i].pixels.data() + static_cast<std::size_t>(r) * tw * 3,
                  static_cast<std::size_t>(tw) * 3);
    }
  }
  return out;
}

}  // namespace cnnprobe
