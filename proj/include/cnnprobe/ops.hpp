#pragma once

#include <cstdint>
#include <vector>

#include "cnnprobe/tensor.hpp"

namespace cnnprobe {

struct ConvWeights {
  Tensor kernels;  // (out, in, kh, kw)
  Tensor bias;     // (out)

  int out_channels() const { return kernels.dim(0); }
  int in_channels() const { return kernels.dim(1); }
  int kernel_h() const { return kernels.dim(2); }
  int kernel_w() const { return kernels.dim(3); }
};

struct FcWeights {
  Tensor weights;  // (out, in)
  Tensor bias;     // (out)

  int out_features() const { return weights.dim(0); }
  int in_features() const { return weights.dim(1); }
};

struct PoolGeometry {
  int window_h = 2;
  int window_w = 2;
  int stride = 2;
};

// Argmax locations of a max-pool, in input (row, col) coordinates, stored
// per output element of shape (C, OH, OW).
struct Switches {
  struct Location {
    std::int32_t row = 0;
    std::int32_t col = 0;
    friend bool operator==(const Location&, const Location&) = default;
  };
  Shape out_shape;
  std::vector<Location> locations;

  friend bool operator==(const Switches&, const Switches&) = default;
};

struct PoolResult {
  Tensor values;
  Switches switches;
};

// Zero-padded cross-correlation plus bias; no kernel flip.
Tensor conv_forward(const Tensor& x, const ConvWeights& w, int stride, int pad);

// Adjoint of conv_forward without the bias: every output element scatters
// its kernel, scaled, back into the input grid. Equivalent to summing over k
// the full convolution of feature map k with the flipped kernel (k, c).
Tensor conv_reverse(const Tensor& y, const ConvWeights& w, int stride, int pad,
                    const Shape& in_shape);

Tensor relu_forward(const Tensor& x);
// Clamps negatives to zero, like the forward pass.
Tensor relu_reverse(const Tensor& r);

// Ties go to the first maximum in row-major window order.
PoolResult maxpool_forward(const Tensor& x, const PoolGeometry& g);

// Places each value at its recorded switch; overlapping windows add up.
Tensor maxpool_reverse(const Tensor& y, const Switches& switches, const Shape& in_shape,
                       const PoolGeometry& g);

// x of any shape is flattened; the result has shape (out).
Tensor fc_forward(const Tensor& x, const FcWeights& w);
// W^T y reshaped to in_shape; bias is not involved.
Tensor fc_reverse(const Tensor& y, const FcWeights& w, const Shape& in_shape);

// Softmax over all elements, computed with max subtraction.
Tensor softmax_forward(const Tensor& x);

}  // namespace cnnprobe
