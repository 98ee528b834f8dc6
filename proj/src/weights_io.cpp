#include "cnnprobe/weights_io.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <map>
#include <set>

#include "cnnprobe/error.hpp"

namespace cnnprobe {

namespace {

static_assert(std::endian::native == std::endian::little, "CNNW I/O assumes a little-endian host");

constexpr std::uint8_t kMagic[4] = {0x43, 0x4E, 0x4E, 0x57};
constexpr std::uint32_t kMaxRank = 8;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw IoError(IoError::Kind::kTruncated, std::string("truncated weight file while reading ") + what);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u32(Bytes& out, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

[[noreturn]] void inconsistent(const std::string& what) {
  throw IoError(IoError::Kind::kInconsistent, what);
}

}  // namespace

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw IoError(IoError::Kind::kBadMagic, "not a CNNW weight file (bad magic)");
  }
  const std::uint32_t version = in.u32("version");
  if (version != kWeightFormatVersion) {
    throw IoError(IoError::Kind::kBadVersion, "unsupported CNNW version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32("tensor count");
  std::vector<NamedTensor> tensors;
  std::set<std::string> names;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = in.u32("name length");
    const auto name_bytes = in.take(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!names.insert(name).second) {
      throw IoError(IoError::Kind::kDuplicateName, "duplicate tensor name '" + name + "'");
    }
    const std::uint32_t dtype = in.u32("dtype");
    if (dtype != 0) {
      throw IoError(IoError::Kind::kBadDtype, "tensor '" + name + "' has unsupported dtype " + std::to_string(dtype));
    }
    const std::uint32_t ndim = in.u32("rank");
    if (ndim > kMaxRank) {
      throw IoError(IoError::Kind::kDimOverflow, "tensor '" + name + "' has rank " + std::to_string(ndim));
    }
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint32_t dim = in.u32("dims");
      if (dim > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw IoError(IoError::Kind::kDimOverflow, "tensor '" + name + "' dimension too large");
      }
      if (dim != 0 && numel > std::numeric_limits<std::uint64_t>::max() / 4 / dim) {
        throw IoError(IoError::Kind::kDimOverflow, "tensor '" + name + "' element count overflows");
      }
      numel *= dim;
      shape.push_back(static_cast<int>(dim));
    }
    if (numel * 4 > in.remaining()) {
      throw IoError(IoError::Kind::kTruncated, "tensor '" + name + "' payload truncated");
    }
    const auto payload = in.take(static_cast<std::size_t>(numel) * 4, "payload");
    std::vector<float> data(static_cast<std::size_t>(numel));
    std::memcpy(data.data(), payload.data(), payload.size());
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (in.remaining() != 0) {
    throw IoError(IoError::Kind::kTrailingData,
                  std::to_string(in.remaining()) + " unexpected bytes after the last tensor");
  }
  return tensors;
}

Bytes encode_tensors(const std::vector<NamedTensor>& tensors) {
  Bytes out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kWeightFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, 0);
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(tensor.data().data());
    out.insert(out.end(), p, p + tensor.size() * 4);
  }
  return out;
}

WeightFile decode_weights(std::span<const std::uint8_t> bytes) {
  WeightFile file;
  std::map<std::string, Tensor> weight_of, bias_of;
  for (auto& [name, tensor] : decode_tensors(bytes)) {
    if (name == kMeanTensorName) {
      if (tensor.rank() != 1 && tensor.rank() != 3) inconsistent("mean must be rank 1 or 3");
      file.mean = std::move(tensor);
      continue;
    }
    const auto dot = name.rfind('.');
    const std::string layer = dot == std::string::npos ? "" : name.substr(0, dot);
    const std::string role = dot == std::string::npos ? "" : name.substr(dot + 1);
    if (layer.empty() || (role != "weight" && role != "bias")) {
      inconsistent("tensor '" + name + "' is not named <layer>.weight or <layer>.bias");
    }
    (role == "weight" ? weight_of : bias_of).emplace(layer, std::move(tensor));
  }
  for (auto& [layer, w] : weight_of) {
    auto b = bias_of.find(layer);
    if (b == bias_of.end()) inconsistent("layer '" + layer + "' has weights but no bias");
    if (b->second.rank() != 1 || b->second.dim(0) != w.dim(0)) {
      inconsistent("layer '" + layer + "' bias does not match its weights");
    }
    if (w.rank() == 4) {
      file.weights.emplace(layer, ConvWeights{std::move(w), std::move(b->second)});
    } else if (w.rank() == 2) {
      file.weights.emplace(layer, FcWeights{std::move(w), std::move(b->second)});
    } else {
      inconsistent("layer '" + layer + "' weight must be rank 4 (conv) or 2 (fc)");
    }
    bias_of.erase(b);
  }
  if (!bias_of.empty()) inconsistent("layer '" + bias_of.begin()->first + "' has a bias but no weights");
  return file;
}

Bytes encode_weights(const WeightSet& weights, const std::optional<Tensor>& mean) {
  std::vector<NamedTensor> tensors;
  for (const auto& [layer, w] : weights) {
    if (const auto* c = std::get_if<ConvWeights>(&w)) {
      tensors.push_back({layer + ".weight", c->kernels});
      tensors.push_back({layer + ".bias", c->bias});
    } else {
      const auto& f = std::get<FcWeights>(w);
      tensors.push_back({layer + ".weight", f.weights});
      tensors.push_back({layer + ".bias", f.bias});
    }
  }
  if (mean) tensors.push_back({kMeanTensorName, *mean});
  return encode_tensors(tensors);
}

WeightFile read_weights(const std::string& path) {
  const Bytes bytes = read_file(path);
  try {
    return decode_weights(bytes);
  } catch (const IoError& e) {
    throw IoError(e.kind(), path + ": " + e.what());
  }
}

void write_weights(const std::string& path, const WeightSet& weights, const std::optional<Tensor>& mean) {
  write_file_atomic(path, encode_weights(weights, mean));
}

}  // namespace cnnprobe
