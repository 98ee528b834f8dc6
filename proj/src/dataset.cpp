#include "cnnprobe/dataset.hpp"

#include <filesystem>
#include <sstream>

#include "cnnprobe/error.hpp"

namespace cnnprobe {

Image Model::resized(const Image& image) const {
  return resize_nearest(image, net.input.height, net.input.width);
}

Tensor Model::prepare(const Image& image) const {
  Tensor x = image_to_tensor(resized(image), net.input.channels);
  return mean ? preprocess(x, *mean) : x;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& base_dir) {
  std::vector<ManifestEntry> entries;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    ManifestEntry e;
    const auto tab = line.find('\t');
    e.path = line.substr(0, tab);
    if (tab != std::string::npos) e.label = line.substr(tab + 1);
    if (e.path.empty()) continue;
    if (!base_dir.empty() && std::filesystem::path(e.path).is_relative()) {
      e.path = (std::filesystem::path(base_dir) / e.path).string();
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const Bytes bytes = read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()),
                        std::filesystem::path(path).parent_path().string());
}

}  // namespace cnnprobe
