#include "cnnprobe/netspec.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "cnnprobe/error.hpp"

namespace cnnprobe {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void fail(const std::vector<int>* lines, std::size_t index,
                       const std::string& what) {
  if (lines != nullptr) throw ParseError((*lines)[index], what);
  throw ShapeError(what);
}

// Shared by validate() and the parser; the parser passes per-layer line
// numbers so failures point at the DSL source.
void check_net(const NetSpec& net, const std::vector<int>* lines, int input_line) {
  const InputShape& in = net.input;
  if (in.channels < 1 || in.height < 1 || in.width < 1) {
    if (lines != nullptr) throw ParseError(input_line, "input dimensions must be >= 1");
    throw ShapeError("input dimensions must be >= 1");
  }
  std::set<std::string> names;
  bool seen_fc = false;
  int c = in.channels, h = in.height, w = in.width;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const std::string& name = name_of(layer);
    if (name.empty()) fail(lines, i, "layer name must not be empty");
    if (!names.insert(name).second) fail(lines, i, "duplicate layer name '" + name + "'");
    std::visit(
        Overloaded{
            [&](const ConvSpec& s) {
              if (seen_fc) fail(lines, i, "conv '" + name + "' follows a fully-connected layer");
              if (s.out_channels < 1) fail(lines, i, "conv '" + name + "': out_channels must be >= 1");
              if (s.kernel_h < 1 || s.kernel_w < 1) fail(lines, i, "conv '" + name + "': kernel dims must be >= 1");
              if (s.stride < 1) fail(lines, i, "conv '" + name + "': stride must be >= 1");
              if (s.pad < 0) fail(lines, i, "conv '" + name + "': pad must be >= 0");
              const int oh = conv_out_dim(h, s.kernel_h, s.stride, s.pad);
              const int ow = conv_out_dim(w, s.kernel_w, s.stride, s.pad);
              if (oh < 1 || ow < 1) {
                fail(lines, i, "conv '" + name + "': output spatial size underflows (" +
                                   std::to_string(oh) + "x" + std::to_string(ow) + ")");
              }
              c = s.out_channels;
              h = oh;
              w = ow;
            },
            [&](const PoolSpec& s) {
              if (seen_fc) fail(lines, i, "pool '" + name + "' follows a fully-connected layer");
              if (s.window_h < 1 || s.window_w < 1) fail(lines, i, "pool '" + name + "': window dims must be >= 1");
              if (s.stride < 1) fail(lines, i, "pool '" + name + "': stride must be >= 1");
              const int oh = conv_out_dim(h, s.window_h, s.stride, 0);
              const int ow = conv_out_dim(w, s.window_w, s.stride, 0);
              if (oh < 1 || ow < 1) {
                fail(lines, i, "pool '" + name + "': output spatial size underflows (" +
                                   std::to_string(oh) + "x" + std::to_string(ow) + ")");
              }
              h = oh;
              w = ow;
            },
            [&](const FcSpec& s) {
              if (s.out_features < 1) fail(lines, i, "fc '" + name + "': out_features must be >= 1");
              seen_fc = true;
              c = s.out_features;
              h = w = 1;
            },
            [&](const ReluSpec&) {},
            [&](const SoftmaxSpec&) {},
        },
        layer);
  }
}

bool parse_int(std::string_view token, int& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

int expect_int(std::string_view token, int line, std::string_view what) {
  int v = 0;
  if (!parse_int(token, v)) {
    throw ParseError(line, "malformed " + std::string(what) + " '" + std::string(token) + "'");
  }
  return v;
}

std::pair<int, int> expect_dims(std::string_view token, int line, std::string_view what) {
  const auto x = token.find('x');
  if (x == std::string_view::npos) {
    throw ParseError(line, "malformed " + std::string(what) + " '" + std::string(token) +
                               "', expected <H>x<W>");
  }
  return {expect_int(token.substr(0, x), line, what), expect_int(token.substr(x + 1), line, what)};
}

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

// Parses trailing "key value" pairs; each allowed key at most once.
void parse_options(const std::vector<std::string_view>& tokens, std::size_t from, int line,
                   std::initializer_list<std::pair<std::string_view, int*>> allowed) {
  std::set<std::string_view> seen;
  for (std::size_t i = from; i < tokens.size(); i += 2) {
    const std::string_view key = tokens[i];
    int* target = nullptr;
    for (const auto& [name, ptr] : allowed) {
      if (name == key) target = ptr;
    }
    if (target == nullptr) throw ParseError(line, "unknown option '" + std::string(key) + "'");
    if (!seen.insert(key).second) throw ParseError(line, "option '" + std::string(key) + "' given twice");
    if (i + 1 >= tokens.size()) throw ParseError(line, "option '" + std::string(key) + "' needs a value");
    *target = expect_int(tokens[i + 1], line, key);
  }
}

void expect_count(const std::vector<std::string_view>& tokens, std::size_t n, int line,
                  std::string_view usage) {
  if (tokens.size() != n) {
    throw ParseError(line, "expected '" + std::string(usage) + "'");
  }
}

}  // namespace

LayerKind kind_of(const LayerSpec& layer) {
  return std::visit(Overloaded{
                        [](const ConvSpec&) { return LayerKind::kConv; },
                        [](const ReluSpec&) { return LayerKind::kRelu; },
                        [](const PoolSpec&) { return LayerKind::kPool; },
                        [](const FcSpec&) { return LayerKind::kFc; },
                        [](const SoftmaxSpec&) { return LayerKind::kSoftmax; },
                    },
                    layer);
}

const std::string& name_of(const LayerSpec& layer) {
  return std::visit([](const auto& s) -> const std::string& { return s.name; }, layer);
}

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kPool: return "pool";
    case LayerKind::kFc: return "fc";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "?";
}

std::optional<std::size_t> NetSpec::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (name_of(layers[i]) == name) return i;
  }
  return std::nullopt;
}

std::size_t NetSpec::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw SelectionError("unknown layer '" + std::string(name) + "'");
}

NetSpec parse_netspec(std::string_view text) {
  NetSpec net;
  std::vector<int> lines;
  std::set<std::string, std::less<>> names;
  bool have_input = false;
  int input_line = 0;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;

    const std::string_view keyword = tokens[0];
    if (keyword == "input") {
      if (have_input) throw ParseError(line_no, "duplicate 'input' directive");
      if (!net.layers.empty()) throw ParseError(line_no, "'input' must precede all layers");
      expect_count(tokens, 4, line_no, "input <C> <H> <W>");
      net.input.channels = expect_int(tokens[1], line_no, "channel count");
      net.input.height = expect_int(tokens[2], line_no, "height");
      net.input.width = expect_int(tokens[3], line_no, "width");
      have_input = true;
      input_line = line_no;
      continue;
    }

    if (keyword != "conv" && keyword != "relu" && keyword != "pool" && keyword != "fc" &&
        keyword != "softmax") {
      throw ParseError(line_no, "unknown layer keyword '" + std::string(keyword) + "'");
    }
    if (!have_input) throw ParseError(line_no, "layer before 'input' directive");
    if (tokens.size() < 2) throw ParseError(line_no, "missing layer name");
    std::string name(tokens[1]);
    if (!names.insert(name).second) throw ParseError(line_no, "duplicate layer name '" + name + "'");

    if (keyword == "conv") {
      if (tokens.size() < 4) throw ParseError(line_no, "expected 'conv <name> <out_channels> <KH>x<KW> [stride <s>] [pad <p>]'");
      ConvSpec s;
      s.name = name;
      s.out_channels = expect_int(tokens[2], line_no, "out_channels");
      std::tie(s.kernel_h, s.kernel_w) = expect_dims(tokens[3], line_no, "kernel");
      parse_options(tokens, 4, line_no, {{"stride", &s.stride}, {"pad", &s.pad}});
      net.layers.emplace_back(s);
    } else if (keyword == "pool") {
      if (tokens.size() < 3) throw ParseError(line_no, "expected 'pool <name> <KH>x<KW> [stride <s>]'");
      PoolSpec s;
      s.name = name;
      std::tie(s.window_h, s.window_w) = expect_dims(tokens[2], line_no, "window");
      parse_options(tokens, 3, line_no, {{"stride", &s.stride}});
      net.layers.emplace_back(s);
    } else if (keyword == "fc") {
      expect_count(tokens, 3, line_no, "fc <name> <out_features>");
      net.layers.emplace_back(FcSpec{name, expect_int(tokens[2], line_no, "out_features")});
    } else if (keyword == "relu") {
      expect_count(tokens, 2, line_no, "relu <name>");
      net.layers.emplace_back(ReluSpec{name});
    } else {
      expect_count(tokens, 2, line_no, "softmax <name>");
      net.layers.emplace_back(SoftmaxSpec{name});
    }
    lines.push_back(line_no);
  }
  if (!have_input) throw ParseError(0, "missing 'input' directive");
  check_net(net, &lines, input_line);
  return net;
}

NetSpec load_netspec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::kOpen, "cannot open net spec '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_netspec(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

std::string print_netspec(const NetSpec& net) {
  std::ostringstream os;
  os << "input " << net.input.channels << ' ' << net.input.height << ' ' << net.input.width << '\n';
  for (const LayerSpec& layer : net.layers) {
    std::visit(Overloaded{
                   [&](const ConvSpec& s) {
                     os << "conv " << s.name << ' ' << s.out_channels << ' ' << s.kernel_h << 'x'
                        << s.kernel_w << " stride " << s.stride << " pad " << s.pad << '\n';
                   },
                   [&](const PoolSpec& s) {
                     os << "pool " << s.name << ' ' << s.window_h << 'x' << s.window_w << " stride "
                        << s.stride << '\n';
                   },
                   [&](const FcSpec& s) { os << "fc " << s.name << ' ' << s.out_features << '\n'; },
                   [&](const ReluSpec& s) { os << "relu " << s.name << '\n'; },
                   [&](const SoftmaxSpec& s) { os << "softmax " << s.name << '\n'; },
               },
               layer);
  }
  return os.str();
}

void validate(const NetSpec& net) { check_net(net, nullptr, 0); }

std::optional<BuiltinNet> builtin_from_name(std::string_view name) {
  if (name == "vggcnn16") return BuiltinNet::kVggCnn16;
  if (name == "alexcnn") return BuiltinNet::kAlexCnn;
  return std::nullopt;
}

NetSpec builtin_netspec(BuiltinNet which) {
  NetSpec net;
  net.input = {3, 224, 224};
  auto conv = [&](std::string name, int out, int k, int stride, int pad) {
    net.layers.emplace_back(ConvSpec{std::move(name), out, k, k, stride, pad});
  };
  auto relu = [&](std::string name) { net.layers.emplace_back(ReluSpec{std::move(name)}); };
  auto pool = [&](std::string name) { net.layers.emplace_back(PoolSpec{std::move(name), 2, 2, 2}); };

  if (which == BuiltinNet::kVggCnn16) {
    // Five 3x3/s1/p1 conv groups, each closed by a 2x2/s2 max-pool.
    const int group_sizes[] = {2, 2, 3, 3, 3};
    const int group_filters[] = {64, 128, 256, 512, 512};
    for (int g = 0; g < 5; ++g) {
      for (int i = 0; i < group_sizes[g]; ++i) {
        const std::string suffix = std::to_string(g + 1) + "_" + std::to_string(i + 1);
        conv("c" + suffix, group_filters[g], 3, 1, 1);
        relu("r" + suffix);
      }
      pool("p" + std::to_string(g + 1));
    }
  } else {
    conv("c1", 96, 11, 4, 2);
    relu("r1");
    pool("p1");
    conv("c2", 256, 5, 1, 1);
    relu("r2");
    pool("p2");
    conv("c3", 384, 3, 1, 1);
    relu("r3");
    conv("c4", 384, 3, 1, 1);
    relu("r4");
    conv("c5", 256, 3, 1, 1);
    relu("r5");
    pool("p5");
  }
  net.layers.emplace_back(FcSpec{"fc6", 4096});
  relu("r6");
  net.layers.emplace_back(FcSpec{"fc7", 4096});
  relu("r7");
  net.layers.emplace_back(FcSpec{"fc8", 1000});
  net.layers.emplace_back(SoftmaxSpec{"prob"});
  return net;
}

int conv_out_dim(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

std::vector<LayerShape> shape_trace(const NetSpec& net) {
  std::vector<LayerShape> out;
  out.reserve(net.layers.size());
  Shape cur = net.input.as_shape();
  for (const LayerSpec& layer : net.layers) {
    const std::string& name = name_of(layer);
    std::visit(Overloaded{
                   [&](const ConvSpec& s) {
                     if (cur.size() != 3) throw ShapeError("conv '" + name + "' needs a spatial input");
                     const int oh = conv_out_dim(cur[1], s.kernel_h, s.stride, s.pad);
                     const int ow = conv_out_dim(cur[2], s.kernel_w, s.stride, s.pad);
                     if (oh < 1 || ow < 1) throw ShapeError("layer '" + name + "': spatial dimension underflow");
                     cur = {s.out_channels, oh, ow};
                   },
                   [&](const PoolSpec& s) {
                     if (cur.size() != 3) throw ShapeError("pool '" + name + "' needs a spatial input");
                     const int oh = conv_out_dim(cur[1], s.window_h, s.stride, 0);
                     const int ow = conv_out_dim(cur[2], s.window_w, s.stride, 0);
                     if (oh < 1 || ow < 1) throw ShapeError("layer '" + name + "': spatial dimension underflow");
                     cur = {cur[0], oh, ow};
                   },
                   [&](const FcSpec& s) { cur = {s.out_features}; },
                   [&](const ReluSpec&) {},
                   [&](const SoftmaxSpec&) {},
               },
               layer);
    out.push_back({name, cur});
  }
  return out;
}

std::vector<LayerField> receptive_fields(const NetSpec& net) {
  std::vector<LayerField> out;
  ReceptiveField rf;  // identity field of an input pixel
  for (const LayerSpec& layer : net.layers) {
    const LayerKind kind = kind_of(layer);
    if (kind == LayerKind::kFc || kind == LayerKind::kSoftmax) break;
    if (const auto* s = std::get_if<ConvSpec>(&layer)) {
      rf.height += (s->kernel_h - 1) * rf.stride;
      rf.width += (s->kernel_w - 1) * rf.stride;
      rf.offset += s->pad * rf.stride;
      rf.stride *= s->stride;
    } else if (const auto* p = std::get_if<PoolSpec>(&layer)) {
      rf.height += (p->window_h - 1) * rf.stride;
      rf.width += (p->window_w - 1) * rf.stride;
      rf.stride *= p->stride;
    }
    out.push_back({name_of(layer), rf});
  }
  return out;
}

std::string receptive_field_tsv(const std::vector<LayerField>& fields) {
  std::ostringstream os;
  os << "# layer\tsize\tstride\toffset\n";
  for (const auto& [name, rf] : fields) {
    os << name << '\t';
    if (rf.height == rf.width) {
      os << rf.height;
    } else {
      os << rf.height << 'x' << rf.width;
    }
    os << '\t' << rf.stride << '\t' << rf.offset << '\n';
  }
  return os.str();
}

NeuronBox neuron_bbox(const NetSpec& net, std::string_view layer, int row, int col) {
  const std::size_t index = net.index_of(layer);
  const auto fields = receptive_fields(net);
  if (index >= fields.size()) {
    throw SelectionError("layer '" + std::string(layer) + "' has no spatial receptive field");
  }
  const Shape shape = shape_trace(net)[index].shape;
  if (row < 0 || col < 0 || row >= shape[1] || col >= shape[2]) {
    throw SelectionError("position (" + std::to_string(row) + "," + std::to_string(col) +
                         ") outside layer '" + std::string(layer) + "' of extent " +
                         std::to_string(shape[1]) + "x" + std::to_string(shape[2]));
  }
  const ReceptiveField& rf = fields[index].field;
  NeuronBox box;
  box.full = {row * rf.stride - rf.offset, col * rf.stride - rf.offset, rf.height, rf.width};
  const int r0 = std::max(box.full.row, 0);
  const int c0 = std::max(box.full.col, 0);
  const int r1 = std::min(box.full.row + box.full.height, net.input.height);
  const int c1 = std::min(box.full.col + box.full.width, net.input.width);
  box.clipped = {r0, c0, std::max(r1 - r0, 0), std::max(c1 - c0, 0)};
  box.is_clipped = !(box.clipped == box.full);
  return box;
}

}  // namespace cnnprobe
