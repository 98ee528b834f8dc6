#include "cnnprobe/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cnnprobe/error.hpp"

namespace cnnprobe {

namespace {

Shape input_shape_of(const std::vector<LayerShape>& shapes, const NetSpec& net, std::size_t i) {
  return i == 0 ? net.input.as_shape() : shapes[i - 1].shape;
}

}  // namespace

void validate_weights(const NetSpec& net, const WeightSet& weights) {
  const auto shapes = shape_trace(net);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const std::string& name = name_of(layer);
    const Shape in = input_shape_of(shapes, net, i);
    if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
      ++expected;
      auto it = weights.find(name);
      if (it == weights.end()) throw ShapeError("missing weights for conv layer '" + name + "'");
      const auto* w = std::get_if<ConvWeights>(&it->second);
      if (w == nullptr) throw ShapeError("layer '" + name + "' is conv but weights are fully-connected");
      const Shape want{conv->out_channels, in[0], conv->kernel_h, conv->kernel_w};
      if (w->kernels.shape() != want || w->bias.shape() != Shape{conv->out_channels}) {
        throw ShapeError("layer '" + name + "': kernels " + shape_to_string(w->kernels.shape()) +
                         " / bias " + shape_to_string(w->bias.shape()) + ", expected " +
                         shape_to_string(want) + " / (" + std::to_string(conv->out_channels) + ")");
      }
    } else if (const auto* fc = std::get_if<FcSpec>(&layer)) {
      ++expected;
      auto it = weights.find(name);
      if (it == weights.end()) throw ShapeError("missing weights for fc layer '" + name + "'");
      const auto* w = std::get_if<FcWeights>(&it->second);
      if (w == nullptr) throw ShapeError("layer '" + name + "' is fc but weights are convolutional");
      const Shape want{fc->out_features, static_cast<int>(shape_numel(in))};
      if (w->weights.shape() != want || w->bias.shape() != Shape{fc->out_features}) {
        throw ShapeError("layer '" + name + "': weights " + shape_to_string(w->weights.shape()) +
                         " / bias " + shape_to_string(w->bias.shape()) + ", expected " +
                         shape_to_string(want) + " / (" + std::to_string(fc->out_features) + ")");
      }
    }
  }
  if (weights.size() != expected) {
    for (const auto& [name, w] : weights) {
      const auto i = net.find(name);
      if (!i || (kind_of(net.layers[*i]) != LayerKind::kConv && kind_of(net.layers[*i]) != LayerKind::kFc)) {
        throw ShapeError("weights given for '" + name + "', which is not a conv/fc layer of the net");
      }
    }
  }
}

WeightSet random_weights(const NetSpec& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unit(-1.0f, 1.0f);
  auto fill = [&](Tensor& t, float scale) {
    for (float& v : t.data()) v = unit(rng) * scale;
  };
  const auto shapes = shape_trace(net);
  WeightSet ws;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Shape in = input_shape_of(shapes, net, i);
    if (const auto* conv = std::get_if<ConvSpec>(&net.layers[i])) {
      ConvWeights w{Tensor({conv->out_channels, in[0], conv->kernel_h, conv->kernel_w}),
                    Tensor({conv->out_channels})};
      fill(w.kernels, 1.0f / std::sqrt(static_cast<float>(in[0] * conv->kernel_h * conv->kernel_w)));
      fill(w.bias, 0.1f);
      ws.emplace(conv->name, std::move(w));
    } else if (const auto* fc = std::get_if<FcSpec>(&net.layers[i])) {
      const int fan_in = static_cast<int>(shape_numel(in));
      FcWeights w{Tensor({fc->out_features, fan_in}), Tensor({fc->out_features})};
      fill(w.weights, 1.0f / std::sqrt(static_cast<float>(fan_in)));
      fill(w.bias, 0.1f);
      ws.emplace(fc->name, std::move(w));
    }
  }
  return ws;
}

Tensor preprocess(const Tensor& image, const Tensor& mean) {
  if (image.rank() != 3) throw ShapeError("image must be (C,H,W), got " + shape_to_string(image.shape()));
  Tensor out = image;
  if (mean.shape() == image.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= mean[i];
    return out;
  }
  if (mean.rank() == 1 && mean.dim(0) == image.dim(0)) {
    for (int c = 0; c < image.dim(0); ++c) {
      for (float& v : out.channel(c)) v -= mean[c];
    }
    return out;
  }
  throw ShapeError("mean " + shape_to_string(mean.shape()) + " does not fit image " +
                   shape_to_string(image.shape()));
}

ForwardTrace run_forward(const NetSpec& net, const WeightSet& weights, const Tensor& input,
                         const ForwardOptions& options) {
  if (input.shape() != net.input.as_shape()) {
    throw ShapeError("input " + shape_to_string(input.shape()) + " does not match net input " +
                     shape_to_string(net.input.as_shape()));
  }
  ForwardTrace trace;
  trace.input = input;
  trace.activations.resize(net.layers.size());
  trace.switches.resize(net.layers.size());

  Tensor cur = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const std::string& name = name_of(layer);
    try {
      if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
        auto it = weights.find(name);
        if (it == weights.end() || !std::holds_alternative<ConvWeights>(it->second)) {
          throw ShapeError("no conv weights");
        }
        cur = conv_forward(cur, std::get<ConvWeights>(it->second), conv->stride, conv->pad);
      } else if (const auto* pool = std::get_if<PoolSpec>(&layer)) {
        PoolResult r = maxpool_forward(cur, {pool->window_h, pool->window_w, pool->stride});
        cur = std::move(r.values);
        trace.switches[i] = std::move(r.switches);
      } else if (std::holds_alternative<FcSpec>(layer)) {
        auto it = weights.find(name);
        if (it == weights.end() || !std::holds_alternative<FcWeights>(it->second)) {
          throw ShapeError("no fc weights");
        }
        cur = fc_forward(cur, std::get<FcWeights>(it->second));
      } else if (std::holds_alternative<ReluSpec>(layer)) {
        cur = relu_forward(cur);
      } else {
        cur = softmax_forward(cur);
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + name + "': " + e.what());
    }
    if (!options.retain || options.retain->count(name) > 0) trace.activations[i] = cur;
  }
  return trace;
}

std::vector<Prediction> top_k_predictions(const NetSpec& net, const ForwardTrace& trace,
                                          std::size_t k, const std::vector<std::string>& labels) {
  if (net.layers.empty() || kind_of(net.layers.back()) != LayerKind::kSoftmax) {
    throw SelectionError("net does not end in a softmax layer");
  }
  const Tensor& probs = trace.activations.back();
  if (probs.empty()) throw SelectionError("final softmax activation was not retained");
  const std::size_t dim = probs.size();
  if (!labels.empty() && labels.size() != dim) {
    throw SelectionError("got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(dim) + " output classes");
  }
  if (k > dim) {
    throw SelectionError("k = " + std::to_string(k) + " exceeds output dimension " + std::to_string(dim));
  }
  std::vector<std::size_t> order(dim);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t c = order[i];
    out.push_back({labels.empty() ? std::to_string(c) : labels[c], c, probs[c]});
  }
  return out;
}

}  // namespace cnnprobe
