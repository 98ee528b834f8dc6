#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cnnprobe/engine.hpp"
#include "cnnprobe/image.hpp"

namespace cnnprobe {

// Which part of a layer's representation is projected back to pixels.
// For rank-1 (fully-connected) layers every unit counts as a channel and a
// neuron selection must use row = col = 0.
struct Selection {
  enum class Mode {
    kFull,         // every activation of the layer
    kFilter,       // one feature map
    kNeuron,       // one activation
    kTopKFilters,  // the `count` feature maps with the highest maximum
  };

  std::string layer;
  Mode mode = Mode::kFull;
  int filter = 0;
  int row = 0;
  int col = 0;
  int count = 0;

  static Selection full(std::string layer) { return {std::move(layer), Mode::kFull}; }
  static Selection single_filter(std::string layer, int k) {
    return {std::move(layer), Mode::kFilter, k};
  }
  static Selection neuron(std::string layer, int k, int row, int col) {
    return {std::move(layer), Mode::kNeuron, k, row, col};
  }
  static Selection top_filters(std::string layer, int n) {
    return {std::move(layer), Mode::kTopKFilters, 0, 0, 0, n};
  }
};

// Parses "full", "filter:K", "neuron:K,R,C" or "topk:N" for the given layer.
Selection parse_selection(std::string_view text, std::string layer);

// The layer's activation with every value outside the selection zeroed.
// Throws SelectionError for out-of-range indices.
Tensor mask_selection(const Tensor& activation, const Selection& sel);

// Projects the selected part of a layer's activation back to input space by
// running the reverse of each layer from the selected one down to the first:
// flipped-kernel convolution for conv, clamping for relu, switch placement
// for max-pool and the transposed map for fc. The result has the net's input
// shape. Softmax layers cannot be selected.
Tensor reconstruct(const NetSpec& net, const WeightSet& weights, const ForwardTrace& trace,
                   const Selection& sel);

// Full-selection reconstructions of several layers, given in net order.
std::vector<Tensor> reconstruct_series(const NetSpec& net, const WeightSet& weights,
                                       const ForwardTrace& trace,
                                       const std::vector<std::string>& layers);

// Per-image affine stretch to [0, 255]; a constant tensor maps to 128.
// Accepts (3, H, W) or single-channel (1, H, W) tensors.
Image to_displayable(const Tensor& x);

}  // namespace cnnprobe
