#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "cnnprobe/netspec.hpp"
#include "cnnprobe/ops.hpp"
#include "cnnprobe/tensor.hpp"

namespace cnnprobe {

using LayerWeights = std::variant<ConvWeights, FcWeights>;

// Parameters for every conv/fc layer, keyed by layer name.
using WeightSet = std::map<std::string, LayerWeights>;

// Throws ShapeError naming the layer when an entry is missing, has the wrong
// kind or dims, or when an entry names no conv/fc layer.
void validate_weights(const NetSpec& net, const WeightSet& weights);

// Seeded uniform weights scaled by 1/sqrt(fan_in), biases in [-0.1, 0.1].
// Used for fixture nets and for exercising the tools without real weights.
WeightSet random_weights(const NetSpec& net, std::uint64_t seed);

// image - mean. mean is either (C, H, W) like the image or (C) per channel.
Tensor preprocess(const Tensor& image, const Tensor& mean);

struct ForwardOptions {
  // Layers whose activations are kept. nullopt keeps all. Switches are
  // always kept since reconstruction through any pool needs them.
  std::optional<std::set<std::string>> retain;
};

struct ForwardTrace {
  Tensor input;
  std::vector<Tensor> activations;             // one per layer; empty when not retained
  std::vector<std::optional<Switches>> switches;  // set for pool layers
};

ForwardTrace run_forward(const NetSpec& net, const WeightSet& weights, const Tensor& input,
                         const ForwardOptions& options = {});

struct Prediction {
  std::string label;
  std::size_t index = 0;
  double probability = 0.0;
};

// Highest-probability classes of the final softmax layer, descending; ties
// keep the lower class index first.
std::vector<Prediction> top_k_predictions(const NetSpec& net, const ForwardTrace& trace,
                                          std::size_t k, const std::vector<std::string>& labels);

}  // namespace cnnprobe
