#include "cnnprobe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cnnprobe/error.hpp"
#include "cnnprobe/netspec.hpp"

namespace cnnprobe {

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

void check_conv_weights(const ConvWeights& w) {
  require_rank(w.kernels, 4, "conv kernels");
  require_rank(w.bias, 1, "conv bias");
  if (w.bias.dim(0) != w.out_channels()) {
    throw ShapeError("conv bias " + shape_to_string(w.bias.shape()) + " does not match kernels " +
                     shape_to_string(w.kernels.shape()));
  }
}

// Output indices o in [lo, hi) whose input coordinate o * stride + tap - pad
// lies in [0, in).
std::pair<int, int> valid_range(int out, int in, int tap, int stride, int pad) {
  const int shift = pad - tap;  // o * stride >= shift
  int lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
  // o * stride + tap - pad <= in - 1
  const int top = in - 1 + pad - tap;
  int hi = top < 0 ? 0 : top / stride + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

}  // namespace

Tensor conv_forward(const Tensor& x, const ConvWeights& w, int stride, int pad) {
  require_rank(x, 3, "conv input");
  check_conv_weights(w);
  if (x.dim(0) != w.in_channels()) {
    throw ShapeError("conv input has " + std::to_string(x.dim(0)) + " channels, kernels expect " +
                     std::to_string(w.in_channels()));
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv stride must be >= 1 and pad >= 0");
  const int in_c = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
  const int kh = w.kernel_h(), kw = w.kernel_w();
  const int out_h = conv_out_dim(in_h, kh, stride, pad);
  const int out_w = conv_out_dim(in_w, kw, stride, pad);
  if (out_h < 1 || out_w < 1) throw ShapeError("conv output underflows for input " + shape_to_string(x.shape()));

  const int out_c = w.out_channels();
  Tensor y({out_c, out_h, out_w});
  std::vector<double> acc(static_cast<std::size_t>(out_h) * out_w);
  const float* kernels = w.kernels.data().data();
  for (int k = 0; k < out_c; ++k) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(w.bias[k]));
    for (int c = 0; c < in_c; ++c) {
      const auto plane = x.channel(c);
      const float* kernel = kernels + (static_cast<std::size_t>(k) * in_c + c) * kh * kw;
      for (int i = 0; i < kh; ++i) {
        const auto [oh_lo, oh_hi] = valid_range(out_h, in_h, i, stride, pad);
        for (int j = 0; j < kw; ++j) {
          const double wv = kernel[i * kw + j];
          const auto [ow_lo, ow_hi] = valid_range(out_w, in_w, j, stride, pad);
          for (int oh = oh_lo; oh < oh_hi; ++oh) {
            const float* row = plane.data() + static_cast<std::size_t>(oh * stride + i - pad) * in_w;
            double* out_row = acc.data() + static_cast<std::size_t>(oh) * out_w;
            for (int ow = ow_lo; ow < ow_hi; ++ow) {
              out_row[ow] += wv * row[ow * stride + j - pad];
            }
          }
        }
      }
    }
    auto dst = y.channel(k);
    std::transform(acc.begin(), acc.end(), dst.begin(), [](double v) { return static_cast<float>(v); });
  }
  return y;
}

Tensor conv_reverse(const Tensor& y, const ConvWeights& w, int stride, int pad,
                    const Shape& in_shape) {
  require_rank(y, 3, "conv_reverse input");
  check_conv_weights(w);
  if (in_shape.size() != 3 || in_shape[0] != w.in_channels()) {
    throw ShapeError("conv_reverse target shape " + shape_to_string(in_shape) +
                     " does not match kernels " + shape_to_string(w.kernels.shape()));
  }
  const int in_c = in_shape[0], in_h = in_shape[1], in_w = in_shape[2];
  const int kh = w.kernel_h(), kw = w.kernel_w();
  const int out_h = conv_out_dim(in_h, kh, stride, pad);
  const int out_w = conv_out_dim(in_w, kw, stride, pad);
  const int out_c = w.out_channels();
  if (y.shape() != Shape{out_c, out_h, out_w}) {
    throw ShapeError("conv_reverse input " + shape_to_string(y.shape()) + " does not match forward output " +
                     shape_to_string({out_c, out_h, out_w}));
  }

  Tensor x(in_shape);
  std::vector<double> acc(static_cast<std::size_t>(in_h) * in_w);
  const float* kernels = w.kernels.data().data();
  for (int c = 0; c < in_c; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int k = 0; k < out_c; ++k) {
      const auto plane = y.channel(k);
      const float* kernel = kernels + (static_cast<std::size_t>(k) * in_c + c) * kh * kw;
      for (int i = 0; i < kh; ++i) {
        const auto [oh_lo, oh_hi] = valid_range(out_h, in_h, i, stride, pad);
        for (int j = 0; j < kw; ++j) {
          const double wv = kernel[i * kw + j];
          const auto [ow_lo, ow_hi] = valid_range(out_w, in_w, j, stride, pad);
          for (int oh = oh_lo; oh < oh_hi; ++oh) {
            const float* src = plane.data() + static_cast<std::size_t>(oh) * out_w;
            double* dst = acc.data() + static_cast<std::size_t>(oh * stride + i - pad) * in_w;
            for (int ow = ow_lo; ow < ow_hi; ++ow) {
              dst[ow * stride + j - pad] += wv * src[ow];
            }
          }
        }
      }
    }
    auto dst = x.channel(c);
    std::transform(acc.begin(), acc.end(), dst.begin(), [](double v) { return static_cast<float>(v); });
  }
  return x;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data()) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor relu_reverse(const Tensor& r) { return relu_forward(r); }

PoolResult maxpool_forward(const Tensor& x, const PoolGeometry& g) {
  require_rank(x, 3, "maxpool input");
  if (g.window_h < 1 || g.window_w < 1 || g.stride < 1) throw ShapeError("invalid pooling geometry");
  const int ch = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
  const int out_h = conv_out_dim(in_h, g.window_h, g.stride, 0);
  const int out_w = conv_out_dim(in_w, g.window_w, g.stride, 0);
  if (out_h < 1 || out_w < 1) throw ShapeError("maxpool output underflows for input " + shape_to_string(x.shape()));

  PoolResult r{Tensor({ch, out_h, out_w}), Switches{{ch, out_h, out_w}, {}}};
  r.switches.locations.resize(r.values.size());
  std::size_t o = 0;
  for (int c = 0; c < ch; ++c) {
    for (int oh = 0; oh < out_h; ++oh) {
      for (int ow = 0; ow < out_w; ++ow, ++o) {
        const int r0 = oh * g.stride, c0 = ow * g.stride;
        float best = x.at(c, r0, c0);
        Switches::Location loc{r0, c0};
        for (int i = 0; i < g.window_h; ++i) {
          for (int j = 0; j < g.window_w; ++j) {
            const float v = x.at(c, r0 + i, c0 + j);
            if (v > best) {
              best = v;
              loc = {r0 + i, c0 + j};
            }
          }
        }
        r.values[o] = best;
        r.switches.locations[o] = loc;
      }
    }
  }
  return r;
}

Tensor maxpool_reverse(const Tensor& y, const Switches& switches, const Shape& in_shape,
                       const PoolGeometry& g) {
  if (in_shape.size() != 3) throw ShapeError("maxpool_reverse target must be rank 3");
  const Shape out_shape{in_shape[0], conv_out_dim(in_shape[1], g.window_h, g.stride, 0),
                        conv_out_dim(in_shape[2], g.window_w, g.stride, 0)};
  if (y.shape() != out_shape || switches.out_shape != out_shape ||
      switches.locations.size() != y.size()) {
    throw ShapeError("maxpool_reverse geometry mismatch: values " + shape_to_string(y.shape()) +
                     ", switches " + shape_to_string(switches.out_shape) + ", expected " +
                     shape_to_string(out_shape));
  }
  Tensor x(in_shape);
  std::size_t o = 0;
  for (int c = 0; c < out_shape[0]; ++c) {
    for (int oh = 0; oh < out_shape[1]; ++oh) {
      for (int ow = 0; ow < out_shape[2]; ++ow, ++o) {
        const auto& loc = switches.locations[o];
        const int r0 = oh * g.stride, c0 = ow * g.stride;
        if (loc.row < r0 || loc.row >= r0 + g.window_h || loc.col < c0 || loc.col >= c0 + g.window_w) {
          throw ShapeError("switch outside its pooling window");
        }
        x.at(c, loc.row, loc.col) += y[o];
      }
    }
  }
  return x;
}

Tensor fc_forward(const Tensor& x, const FcWeights& w) {
  require_rank(w.weights, 2, "fc weights");
  require_rank(w.bias, 1, "fc bias");
  const int out = w.out_features(), in = w.in_features();
  if (w.bias.dim(0) != out) throw ShapeError("fc bias does not match weights " + shape_to_string(w.weights.shape()));
  if (x.size() != static_cast<std::size_t>(in)) {
    throw ShapeError("fc input of " + std::to_string(x.size()) + " values, weights expect " + std::to_string(in));
  }
  Tensor y({out});
  const float* wp = w.weights.data().data();
  for (int o = 0; o < out; ++o) {
    double s = w.bias[o];
    const float* row = wp + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) s += static_cast<double>(row[i]) * x[i];
    y[o] = static_cast<float>(s);
  }
  return y;
}

Tensor fc_reverse(const Tensor& y, const FcWeights& w, const Shape& in_shape) {
  require_rank(w.weights, 2, "fc weights");
  const int out = w.out_features(), in = w.in_features();
  if (y.size() != static_cast<std::size_t>(out)) {
    throw ShapeError("fc_reverse input of " + std::to_string(y.size()) + " values, weights produce " +
                     std::to_string(out));
  }
  if (shape_numel(in_shape) != static_cast<std::size_t>(in)) {
    throw ShapeError("fc_reverse target " + shape_to_string(in_shape) + " does not hold " +
                     std::to_string(in) + " values");
  }
  std::vector<double> acc(static_cast<std::size_t>(in), 0.0);
  const float* wp = w.weights.data().data();
  for (int o = 0; o < out; ++o) {
    const double yo = y[o];
    if (yo == 0.0) continue;
    const float* row = wp + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc[i] += yo * row[i];
  }
  Tensor x(in_shape);
  std::transform(acc.begin(), acc.end(), x.data().begin(), [](double v) { return static_cast<float>(v); });
  return x;
}

Tensor softmax_forward(const Tensor& x) {
  Tensor y = x;
  if (x.empty()) return y;
  const float m = *std::max_element(x.values().begin(), x.values().end());
  double total = 0.0;
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - m);
    total += e[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>(e[i] / total);
  return y;
}

}  // namespace cnnprobe
