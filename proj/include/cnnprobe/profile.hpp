#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cnnprobe/dataset.hpp"

namespace cnnprobe {

struct LayerSparsity {
  std::string layer;
  std::uint64_t zeros = 0;
  std::uint64_t total = 0;
  double sparsity() const { return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total); }
  friend bool operator==(const LayerSparsity&, const LayerSparsity&) = default;
};

struct SparsityReport {
  std::vector<LayerSparsity> layers;  // in net order
  std::size_t images = 0;
  friend bool operator==(const SparsityReport&, const SparsityReport&) = default;
};

struct SparsityOptions {
  // Values with |v| <= threshold count as zero. Without a threshold only
  // exact zeros count, which is what relu produces.
  std::optional<float> threshold;
  int threads = 1;
};

// Number of zero entries of one activation tensor.
std::uint64_t count_zeros(const Tensor& t, const std::optional<float>& threshold = std::nullopt);

// Layers profiled by default: every relu and pool before the first fc, or
// every conv and pool with pre_relu.
std::vector<std::string> default_sparsity_layers(const NetSpec& net, bool pre_relu = false);

// Streams the images through the net and counts zeros per requested layer.
// Only counts are kept between images.
SparsityReport layer_sparsity(const Model& model, const ImageSource& images,
                              const std::vector<std::string>& layers, const SparsityOptions& options = {});

// Element-wise sum of counts; both reports must list the same layers.
SparsityReport merge_reports(const SparsityReport& a, const SparsityReport& b);

struct SparsityComparison {
  std::string layer;
  std::optional<double> first;
  std::optional<double> second;
  std::optional<double> difference() const {
    if (first && second) return *first - *second;
    return std::nullopt;
  }
};

// Union of both reports' layers: the first report's order, then layers only
// the second one has.
std::vector<SparsityComparison> compare_sparsity(const SparsityReport& a, const SparsityReport& b);

// "# layer\tzeros\ttotal\tsparsity"
std::string sparsity_tsv(const SparsityReport& report);
// Reads the output of sparsity_tsv back; `images` is left at 0.
SparsityReport parse_sparsity_tsv(const std::string& text);

// "# layer\tfirst\tsecond\tdifference", '-' marking gaps.
std::string comparison_tsv(const std::vector<SparsityComparison>& rows);

}  // namespace cnnprobe
