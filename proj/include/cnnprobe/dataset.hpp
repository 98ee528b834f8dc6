#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cnnprobe/engine.hpp"
#include "cnnprobe/image.hpp"

namespace cnnprobe {

// A net with its weights and optional mean, ready to turn images into
// preprocessed inputs.
struct Model {
  NetSpec net;
  WeightSet weights;
  std::optional<Tensor> mean;

  // Nearest-neighbour resize to the net input, conversion to the net's
  // channel count, then mean subtraction.
  Tensor prepare(const Image& image) const;
  // The raster prepare() sees after resizing; patch crops come from it.
  Image resized(const Image& image) const;
};

// Random-access image collection. Implementations load lazily so datasets
// larger than memory can be streamed.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::string id(std::size_t i) const = 0;
  virtual Image load(std::size_t i) const = 0;
};

class InMemoryImages : public ImageSource {
 public:
  InMemoryImages() = default;
  void add(std::string id, Image image) { items_.emplace_back(std::move(id), std::move(image)); }
  std::size_t size() const override { return items_.size(); }
  std::string id(std::size_t i) const override { return items_.at(i).first; }
  Image load(std::size_t i) const override { return items_.at(i).second; }

 private:
  std::vector<std::pair<std::string, Image>> items_;
};

struct ManifestEntry {
  std::string path;
  std::string label;
};

// One image path per line with an optional tab-separated label. Blank lines
// and lines starting with '#' are skipped. Relative paths resolve against
// the manifest's directory.
std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& base_dir = "");
std::vector<ManifestEntry> read_manifest(const std::string& path);

class ManifestImages : public ImageSource {
 public:
  explicit ManifestImages(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {}
  std::size_t size() const override { return entries_.size(); }
  std::string id(std::size_t i) const override { return entries_.at(i).path; }
  Image load(std::size_t i) const override { return read_image(entries_.at(i).path); }

 private:
  std::vector<ManifestEntry> entries_;
};

}  // namespace cnnprobe
