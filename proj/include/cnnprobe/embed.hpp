#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cnnprobe/dataset.hpp"
#include "cnnprobe/tsne.hpp"

namespace cnnprobe {

// One spatial position of a layer for one image: its activation vector
// across the layer's channels and the image patch it sees.
struct PatchRecord {
  std::string image_id;
  std::size_t image_index = 0;
  std::string layer;
  int row = 0;
  int col = 0;
  std::vector<float> activation;
  NeuronBox bbox;
  Image pixels;  // crop of the resized input at bbox.full, mid-gray where clipped
};

struct Sampling {
  enum class Kind { kAll, kRandom, kTopNorm };
  Kind kind = Kind::kAll;
  std::size_t count = 0;
  std::uint64_t seed = 0;

  static Sampling all() { return {}; }
  static Sampling random(std::size_t n, std::uint64_t seed) { return {Kind::kRandom, n, seed}; }
  static Sampling top_norm(std::size_t n) { return {Kind::kTopNorm, n, 0}; }
};

// Records for the sampled positions of `layer` (a conv, relu or pool layer
// before the first fc). `all` and `random` return records in (image, row,
// col) order; `top_norm` returns them by descending activation L2 norm.
// `random` and `top_norm` cap at the number of available positions.
std::vector<PatchRecord> extract_patches(const Model& model, const ImageSource& images,
                                         const std::string& layer, const Sampling& sampling,
                                         int threads = 1);

std::vector<std::vector<float>> activation_vectors(const std::vector<PatchRecord>& patches);

// Rescales the embedding to the unit square (per axis) and gives each cell of
// a grid x grid canvas the patch whose embedded point is nearest to the cell
// centre; ties go to the lower patch index. Row-major, row 0 at the top.
std::vector<std::size_t> grid_fill(const Embedding& embedding, int grid);

// Composite canvas: cell (r, c) shows patch assignment[r * grid + c]
// resized to thumb x thumb.
Image render_grid(const std::vector<PatchRecord>& patches, const std::vector<std::size_t>& assignment,
                  int grid, int thumb);

// Indices of the n largest activation entries, descending, ties to the lower index.
std::vector<int> top_activated_filters(const PatchRecord& patch, int n);

struct TopPatch {
  PatchRecord record;
  float activation = 0.0f;
  // Single-neuron reconstruction cropped to the patch box (zero outside the image).
  std::optional<Tensor> reconstruction;
};

// The n positions (over every image and location) with the highest
// activation of filter k in `layer`, descending. Ties are broken by image
// id, then row, then column, so results do not depend on dataset order.
std::vector<TopPatch> top_patches_for_filter(const Model& model, const ImageSource& images,
                                             const std::string& layer, int filter, std::size_t n,
                                             bool with_reconstruction = true, int threads = 1);

// Copies the given rectangle of a (C, H, W) tensor, zero outside its bounds.
Tensor crop_tensor(const Tensor& x, const PixelRect& rect);

}  // namespace cnnprobe
