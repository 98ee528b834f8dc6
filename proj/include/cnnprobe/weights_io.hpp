#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnnprobe/engine.hpp"
#include "cnnprobe/fileio.hpp"

namespace cnnprobe {

// CNNW binary weight format, all integers little-endian:
//
//   "CNNW" | u32 version = 1 | u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u32 dtype (0 = f32)
//               | u32 ndim | ndim x u32 dims | row-major f32 payload
//
// Layer parameters are stored as "<layer>.weight" and "<layer>.bias"; a rank-4
// weight is a conv kernel (out, in, kh, kw), a rank-2 weight is fully-connected
// (out, in). An optional mean image or per-channel mean is stored as "__mean__".
inline constexpr std::uint32_t kWeightFormatVersion = 1;
inline constexpr const char* kMeanTensorName = "__mean__";

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes);
Bytes encode_tensors(const std::vector<NamedTensor>& tensors);

struct WeightFile {
  WeightSet weights;
  std::optional<Tensor> mean;
};

WeightFile decode_weights(std::span<const std::uint8_t> bytes);
// Canonical order: layers sorted by name, weight before bias, mean last.
Bytes encode_weights(const WeightSet& weights, const std::optional<Tensor>& mean = std::nullopt);

WeightFile read_weights(const std::string& path);
void write_weights(const std::string& path, const WeightSet& weights,
                   const std::optional<Tensor>& mean = std::nullopt);

}  // namespace cnnprobe
