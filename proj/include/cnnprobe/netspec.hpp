#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cnnprobe/tensor.hpp"

namespace cnnprobe {

struct ConvSpec {
  std::string name;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct ReluSpec {
  std::string name;
  friend bool operator==(const ReluSpec&, const ReluSpec&) = default;
};

struct PoolSpec {
  std::string name;
  int window_h = 1;
  int window_w = 1;
  int stride = 1;
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

struct FcSpec {
  std::string name;
  int out_features = 1;
  friend bool operator==(const FcSpec&, const FcSpec&) = default;
};

struct SoftmaxSpec {
  std::string name;
  friend bool operator==(const SoftmaxSpec&, const SoftmaxSpec&) = default;
};

using LayerSpec = std::variant<ConvSpec, ReluSpec, PoolSpec, FcSpec, SoftmaxSpec>;

enum class LayerKind { kConv, kRelu, kPool, kFc, kSoftmax };

LayerKind kind_of(const LayerSpec& layer);
const std::string& name_of(const LayerSpec& layer);
std::string_view kind_name(LayerKind kind);

struct InputShape {
  int channels = 1;
  int height = 1;
  int width = 1;
  Shape as_shape() const { return {channels, height, width}; }
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

// A linear chain of layers applied to a (C, H, W) input.
struct NetSpec {
  InputShape input;
  std::vector<LayerSpec> layers;

  // Index of the named layer, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;
  // Index of the named layer; throws SelectionError when absent.
  std::size_t index_of(std::string_view name) const;

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

// Parses the line-oriented architecture DSL:
//
//   input <C> <H> <W>
//   conv <name> <out_channels> <KH>x<KW> [stride <s>] [pad <p>]
//   relu <name>
//   pool <name> <KH>x<KW> [stride <s>]
//   fc <name> <out_features>
//   softmax <name>
//
// '#' starts a comment. Errors are ParseError carrying the 1-based line.
NetSpec parse_netspec(std::string_view text);
NetSpec load_netspec(const std::string& path);
std::string print_netspec(const NetSpec& net);

// Checks parameter ranges, name uniqueness, ordering and spatial underflow.
// Throws ShapeError naming the offending layer.
void validate(const NetSpec& net);

enum class BuiltinNet { kVggCnn16, kAlexCnn };

std::optional<BuiltinNet> builtin_from_name(std::string_view name);
NetSpec builtin_netspec(BuiltinNet which);

struct LayerShape {
  std::string name;
  Shape shape;  // (C, H, W) for spatial layers, (N) after the first fc
};

std::vector<LayerShape> shape_trace(const NetSpec& net);

// Output spatial extent of a conv/pool along one axis (floor division).
int conv_out_dim(int in, int kernel, int stride, int pad);

// Region of input pixels that can influence a neuron. Neuron (r, c) of a
// layer covers rows [r * stride - offset, r * stride - offset + height).
struct ReceptiveField {
  int height = 1;
  int width = 1;
  int stride = 1;
  int offset = 0;
  friend bool operator==(const ReceptiveField&, const ReceptiveField&) = default;
};

struct LayerField {
  std::string name;
  ReceptiveField field;
};

// Fields of every layer up to (excluding) the first fc or softmax.
std::vector<LayerField> receptive_fields(const NetSpec& net);

// "# layer\tsize\tstride\toffset" followed by one row per layer. Size is a
// single number for square fields and "HxW" otherwise.
std::string receptive_field_tsv(const std::vector<LayerField>& fields);

struct PixelRect {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
  bool contains(int r, int c) const {
    return r >= row && r < row + height && c >= col && c < col + width;
  }
};

struct NeuronBox {
  PixelRect full;     // unclipped, may extend past the image
  PixelRect clipped;  // intersected with the image
  bool is_clipped = false;
};

NeuronBox neuron_bbox(const NetSpec& net, std::string_view layer, int row, int col);

}  // namespace cnnprobe
