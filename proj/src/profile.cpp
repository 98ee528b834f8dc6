#include "cnnprobe/profile.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "cnnprobe/error.hpp"
#include "cnnprobe/parallel.hpp"

namespace cnnprobe {

std::uint64_t count_zeros(const Tensor& t, const std::optional<float>& threshold) {
  std::uint64_t n = 0;
  if (threshold) {
    for (float v : t.data()) n += std::abs(v) <= *threshold;
  } else {
    for (float v : t.data()) n += v == 0.0f;
  }
  return n;
}

std::vector<std::string> default_sparsity_layers(const NetSpec& net, bool pre_relu) {
  std::vector<std::string> out;
  for (const LayerSpec& layer : net.layers) {
    const LayerKind kind = kind_of(layer);
    if (kind == LayerKind::kFc || kind == LayerKind::kSoftmax) break;
    if (kind == LayerKind::kPool || kind == (pre_relu ? LayerKind::kConv : LayerKind::kRelu)) {
      out.push_back(name_of(layer));
    }
  }
  return out;
}

SparsityReport layer_sparsity(const Model& model, const ImageSource& images,
                              const std::vector<std::string>& layers, const SparsityOptions& options) {
  if (images.size() == 0) throw DataError("the image set is empty");
  std::vector<std::size_t> indices;
  for (const auto& name : layers) indices.push_back(model.net.index_of(name));
  ForwardOptions fopts;
  fopts.retain = std::set<std::string>(layers.begin(), layers.end());

  std::vector<std::vector<std::uint64_t>> zeros(images.size());
  std::vector<std::uint64_t> per_image_total(layers.size(), 0);
  const auto shapes = shape_trace(model.net);
  for (std::size_t l = 0; l < layers.size(); ++l) per_image_total[l] = shape_numel(shapes[indices[l]].shape);

  parallel_for(images.size(), options.threads, [&](std::size_t i) {
    const ForwardTrace trace =
        run_forward(model.net, model.weights, model.prepare(images.load(i)), fopts);
    zeros[i].resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      zeros[i][l] = count_zeros(trace.activations[indices[l]], options.threshold);
    }
  });

  SparsityReport report;
  report.images = images.size();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerSparsity s{layers[l], 0, per_image_total[l] * images.size()};
    for (const auto& z : zeros) s.zeros += z[l];
    report.layers.push_back(std::move(s));
  }
  return report;
}

SparsityReport merge_reports(const SparsityReport& a, const SparsityReport& b) {
  if (a.layers.size() != b.layers.size()) throw DataError("cannot merge reports over different layers");
  SparsityReport out = a;
  out.images += b.images;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].layer != b.layers[i].layer) throw DataError("cannot merge reports over different layers");
    out.layers[i].zeros += b.layers[i].zeros;
    out.layers[i].total += b.layers[i].total;
  }
  return out;
}

std::vector<SparsityComparison> compare_sparsity(const SparsityReport& a, const SparsityReport& b) {
  std::vector<SparsityComparison> rows;
  for (const auto& l : a.layers) {
    SparsityComparison row{l.layer, l.sparsity(), std::nullopt};
    for (const auto& m : b.layers) {
      if (m.layer == l.layer) row.second = m.sparsity();
    }
    rows.push_back(std::move(row));
  }
  for (const auto& m : b.layers) {
    bool seen = false;
    for (const auto& l : a.layers) seen = seen || l.layer == m.layer;
    if (!seen) rows.push_back({m.layer, std::nullopt, m.sparsity()});
  }
  return rows;
}

std::string sparsity_tsv(const SparsityReport& report) {
  std::ostringstream os;
  os << "# layer\tzeros\ttotal\tsparsity\n" << std::setprecision(9);
  for (const auto& l : report.layers) {
    os << l.layer << '\t' << l.zeros << '\t' << l.total << '\t' << l.sparsity() << '\n';
  }
  return os.str();
}

SparsityReport parse_sparsity_tsv(const std::string& text) {
  SparsityReport report;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    LayerSparsity l;
    if (!std::getline(fields, l.layer, '\t') || !(fields >> l.zeros >> l.total) || l.zeros > l.total) {
      throw ParseError(line_no, "malformed sparsity row '" + line + "'");
    }
    report.layers.push_back(std::move(l));
  }
  return report;
}

std::string comparison_tsv(const std::vector<SparsityComparison>& rows) {
  std::ostringstream os;
  os << "# layer\tfirst\tsecond\tdifference\n" << std::setprecision(9);
  auto cell = [&](const std::optional<double>& v) {
    if (v) {
      os << *v;
    } else {
      os << '-';
    }
  };
  for (const auto& r : rows) {
    os << r.layer << '\t';
    cell(r.first);
    os << '\t';
    cell(r.second);
    os << '\t';
    cell(r.difference());
    os << '\n';
  }
  return os.str();
}

}  // namespace cnnprobe
