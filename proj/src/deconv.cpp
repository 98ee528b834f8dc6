#include "cnnprobe/deconv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "cnnprobe/error.hpp"

namespace cnnprobe {

namespace {

std::vector<int> parse_ints(std::string_view text, std::string_view full) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view tok = text.substr(pos, end - pos);
    int v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw SelectionError("malformed selection '" + std::string(full) + "'");
    }
    out.push_back(v);
    pos = end + 1;
  }
  return out;
}

// Channel / row / col view of an activation; rank-1 tensors are (N, 1, 1).
struct Extent {
  int channels, height, width;
};

Extent extent_of(const Tensor& t) {
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  return {static_cast<int>(t.size()), 1, 1};
}

template <class W>
const W& weights_for(const WeightSet& weights, const std::string& name) {
  auto it = weights.find(name);
  const W* w = it == weights.end() ? nullptr : std::get_if<W>(&it->second);
  if (w == nullptr) throw ShapeError("no matching weights for layer '" + name + "'");
  return *w;
}

}  // namespace

Selection parse_selection(std::string_view text, std::string layer) {
  if (text == "full") return Selection::full(std::move(layer));
  const auto colon = text.find(':');
  const std::string_view mode = text.substr(0, colon);
  if (colon == std::string_view::npos) throw SelectionError("malformed selection '" + std::string(text) + "'");
  const auto args = parse_ints(text.substr(colon + 1), text);
  if (mode == "filter" && args.size() == 1) return Selection::single_filter(std::move(layer), args[0]);
  if (mode == "neuron" && args.size() == 3) return Selection::neuron(std::move(layer), args[0], args[1], args[2]);
  if (mode == "topk" && args.size() == 1) return Selection::top_filters(std::move(layer), args[0]);
  throw SelectionError("malformed selection '" + std::string(text) +
                       "' (expected full, filter:K, neuron:K,R,C or topk:N)");
}

Tensor mask_selection(const Tensor& activation, const Selection& sel) {
  const Extent e = extent_of(activation);
  const std::size_t plane = static_cast<std::size_t>(e.height) * e.width;
  auto check_filter = [&](int k) {
    if (k < 0 || k >= e.channels) {
      throw SelectionError("filter " + std::to_string(k) + " out of range for layer '" + sel.layer +
                           "' with " + std::to_string(e.channels) + " channels");
    }
  };
  switch (sel.mode) {
    case Selection::Mode::kFull:
      return activation;
    case Selection::Mode::kFilter: {
      check_filter(sel.filter);
      Tensor out(activation.shape());
      std::copy_n(activation.data().begin() + sel.filter * plane, plane, out.data().begin() + sel.filter * plane);
      return out;
    }
    case Selection::Mode::kNeuron: {
      check_filter(sel.filter);
      if (sel.row < 0 || sel.row >= e.height || sel.col < 0 || sel.col >= e.width) {
        throw SelectionError("neuron (" + std::to_string(sel.row) + "," + std::to_string(sel.col) +
                             ") outside layer '" + sel.layer + "' of extent " + std::to_string(e.height) +
                             "x" + std::to_string(e.width));
      }
      Tensor out(activation.shape());
      const std::size_t i = sel.filter * plane + static_cast<std::size_t>(sel.row) * e.width + sel.col;
      out[i] = activation[i];
      return out;
    }
    case Selection::Mode::kTopKFilters: {
      if (sel.count < 1 || sel.count > e.channels) {
        throw SelectionError("topk " + std::to_string(sel.count) + " out of range for layer '" + sel.layer +
                             "' with " + std::to_string(e.channels) + " channels");
      }
      std::vector<float> peak(e.channels);
      for (int k = 0; k < e.channels; ++k) {
        const auto* p = activation.data().data() + k * plane;
        peak[k] = *std::max_element(p, p + plane);
      }
      std::vector<int> order(e.channels);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return peak[a] > peak[b]; });
      Tensor out(activation.shape());
      for (int i = 0; i < sel.count; ++i) {
        const std::size_t off = order[i] * plane;
        std::copy_n(activation.data().begin() + off, plane, out.data().begin() + off);
      }
      return out;
    }
  }
  return activation;
}

Tensor reconstruct(const NetSpec& net, const WeightSet& weights, const ForwardTrace& trace,
                   const Selection& sel) {
  const std::size_t index = net.index_of(sel.layer);
  if (kind_of(net.layers[index]) == LayerKind::kSoftmax) {
    throw SelectionError("softmax layer '" + sel.layer + "' cannot be reconstructed; select the layer before it");
  }
  if (trace.activations.size() != net.layers.size() || trace.switches.size() != net.layers.size()) {
    throw ShapeError("trace does not belong to this net");
  }
  const Tensor& start = trace.activations[index];
  if (start.empty()) throw SelectionError("activation of layer '" + sel.layer + "' was not retained in the trace");

  const auto shapes = shape_trace(net);
  if (start.shape() != shapes[index].shape) throw ShapeError("trace does not belong to this net");

  Tensor cur = mask_selection(start, sel);
  for (std::size_t i = index + 1; i-- > 0;) {
    const LayerSpec& layer = net.layers[i];
    const Shape in_shape = i == 0 ? net.input.as_shape() : shapes[i - 1].shape;
    const std::string& name = name_of(layer);
    if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
      cur = conv_reverse(cur, weights_for<ConvWeights>(weights, name), conv->stride, conv->pad, in_shape);
    } else if (const auto* pool = std::get_if<PoolSpec>(&layer)) {
      if (!trace.switches[i]) throw ShapeError("trace has no switches for pool '" + name + "'");
      cur = maxpool_reverse(cur, *trace.switches[i], in_shape, {pool->window_h, pool->window_w, pool->stride});
    } else if (std::holds_alternative<FcSpec>(layer)) {
      cur = fc_reverse(cur, weights_for<FcWeights>(weights, name), in_shape);
    } else if (std::holds_alternative<ReluSpec>(layer)) {
      cur = relu_reverse(cur);
    }
    // A softmax below the selected layer is passed through unchanged.
  }
  return cur;
}

std::vector<Tensor> reconstruct_series(const NetSpec& net, const WeightSet& weights,
                                       const ForwardTrace& trace,
                                       const std::vector<std::string>& layers) {
  std::vector<Tensor> out;
  std::size_t previous = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::size_t index = net.index_of(layers[i]);
    if (i > 0 && index <= previous) {
      throw SelectionError("layers must be listed in net order; '" + layers[i] + "' is out of order");
    }
    previous = index;
    out.push_back(reconstruct(net, weights, trace, Selection::full(layers[i])));
  }
  return out;
}

Image to_displayable(const Tensor& x) {
  if (x.rank() != 3 || (x.dim(0) != 3 && x.dim(0) != 1)) {
    throw ShapeError("displayable tensors are (3,H,W) or (1,H,W), got " + shape_to_string(x.shape()));
  }
  const int h = x.dim(1), w = x.dim(2);
  Image img(w, h, 128);
  if (x.empty()) return img;
  const auto [lo_it, hi_it] = std::minmax_element(x.values().begin(), x.values().end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return img;
  const double scale = 255.0 / (hi - lo);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const float v = x.at(x.dim(0) == 3 ? ch : 0, r, c);
        img.at(r, c, ch) = static_cast<std::uint8_t>(std::lround((v - lo) * scale));
      }
    }
  }
  return img;
}

}  // namespace cnnprobe
