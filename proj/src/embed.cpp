#include "cnnprobe/embed.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <tuple>

#include "cnnprobe/deconv.hpp"
#include "cnnprobe/error.hpp"
#include "cnnprobe/parallel.hpp"

namespace cnnprobe {

namespace {

struct Candidate {
  std::size_t image = 0;
  int row = 0;
  int col = 0;
  std::vector<float> activation;
  double norm = 0.0;
};

std::size_t spatial_layer_index(const NetSpec& net, const std::string& layer) {
  const std::size_t index = net.index_of(layer);
  if (index >= receptive_fields(net).size()) {
    throw SelectionError("layer '" + layer + "' has no spatial extent (fc/softmax layers are not patch layers)");
  }
  return index;
}

void require_images(const ImageSource& images) {
  if (images.size() == 0) throw DataError("the image set is empty");
}

ForwardTrace forward_one(const Model& model, const ImageSource& images, std::size_t i,
                         const std::string& layer) {
  ForwardOptions opts;
  opts.retain = std::set<std::string>{layer};
  return run_forward(model.net, model.weights, model.prepare(images.load(i)), opts);
}

}  // namespace

std::vector<PatchRecord> extract_patches(const Model& model, const ImageSource& images,
                                         const std::string& layer, const Sampling& sampling,
                                         int threads) {
  require_images(images);
  const std::size_t index = spatial_layer_index(model.net, layer);

  std::vector<std::vector<Candidate>> per_image(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const ForwardTrace trace = forward_one(model, images, i, layer);
    const Tensor& act = trace.activations[index];
    const int ch = act.dim(0), h = act.dim(1), w = act.dim(2);
    auto& out = per_image[i];
    out.reserve(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        Candidate cand{i, r, c, std::vector<float>(ch), 0.0};
        double sq = 0.0;
        for (int k = 0; k < ch; ++k) {
          cand.activation[k] = act.at(k, r, c);
          sq += static_cast<double>(cand.activation[k]) * cand.activation[k];
        }
        cand.norm = std::sqrt(sq);
        out.push_back(std::move(cand));
      }
    }
  });
  std::vector<Candidate> all;
  for (auto& v : per_image) std::move(v.begin(), v.end(), std::back_inserter(all));
  per_image.clear();

  switch (sampling.kind) {
    case Sampling::Kind::kAll:
      break;
    case Sampling::Kind::kRandom: {
      std::mt19937_64 rng(sampling.seed);
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(std::min(sampling.count, all.size()));
      std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.image, a.row, a.col) < std::tie(b.image, b.row, b.col);
      });
      break;
    }
    case Sampling::Kind::kTopNorm:
      std::stable_sort(all.begin(), all.end(),
                       [](const Candidate& a, const Candidate& b) { return a.norm > b.norm; });
      all.resize(std::min(sampling.count, all.size()));
      break;
  }

  std::vector<PatchRecord> records(all.size());
  std::map<std::size_t, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < all.size(); ++i) by_image[all[i].image].push_back(i);
  for (const auto& [image, members] : by_image) {
    const Image raster = model.resized(images.load(image));
    const std::string id = images.id(image);
    for (std::size_t m : members) {
      Candidate& cand = all[m];
      PatchRecord& rec = records[m];
      rec.image_id = id;
      rec.image_index = image;
      rec.layer = layer;
      rec.row = cand.row;
      rec.col = cand.col;
      rec.activation = std::move(cand.activation);
      rec.bbox = neuron_bbox(model.net, layer, cand.row, cand.col);
      rec.pixels = crop_padded(raster, rec.bbox.full);
    }
  }
  return records;
}

std::vector<std::vector<float>> activation_vectors(const std::vector<PatchRecord>& patches) {
  std::vector<std::vector<float>> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(p.activation);
  return out;
}

std::vector<std::size_t> grid_fill(const Embedding& embedding, int grid) {
  if (embedding.empty()) throw DataError("grid fill needs at least one patch");
  if (grid < 1) throw DataError("grid size must be >= 1");
  double min_x = embedding[0].x, max_x = min_x, min_y = embedding[0].y, max_y = min_y;
  for (const auto& p : embedding) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  auto unit = [](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.5; };
  std::vector<Point2> scaled(embedding.size());
  for (std::size_t i = 0; i < embedding.size(); ++i) {
    scaled[i] = {unit(embedding[i].x, min_x, max_x), unit(embedding[i].y, min_y, max_y)};
  }
  std::vector<std::size_t> cells(static_cast<std::size_t>(grid) * grid);
  for (int r = 0; r < grid; ++r) {
    const double cy = (r + 0.5) / grid;
    for (int c = 0; c < grid; ++c) {
      const double cx = (c + 0.5) / grid;
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < scaled.size(); ++i) {
        const double dx = scaled[i].x - cx, dy = scaled[i].y - cy;
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      cells[static_cast<std::size_t>(r) * grid + c] = best;
    }
  }
  return cells;
}

Image render_grid(const std::vector<PatchRecord>& patches, const std::vector<std::size_t>& assignment,
                  int grid, int thumb) {
  if (assignment.size() != static_cast<std::size_t>(grid) * grid) {
    throw ShapeError("grid assignment does not have grid x grid cells");
  }
  std::vector<Image> tiles;
  tiles.reserve(assignment.size());
  for (std::size_t idx : assignment) tiles.push_back(resize_nearest(patches.at(idx).pixels, thumb, thumb));
  return tile_images(tiles, grid);
}

std::vector<int> top_activated_filters(const PatchRecord& patch, int n) {
  const int channels = static_cast<int>(patch.activation.size());
  if (n < 0 || n > channels) {
    throw SelectionError("cannot rank " + std::to_string(n) + " of " + std::to_string(channels) + " filters");
  }
  std::vector<int> order(channels);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return patch.activation[a] > patch.activation[b]; });
  order.resize(n);
  return order;
}

Tensor crop_tensor(const Tensor& x, const PixelRect& rect) {
  Tensor out({x.dim(0), rect.height, rect.width});
  for (int c = 0; c < x.dim(0); ++c) {
    for (int r = 0; r < rect.height; ++r) {
      const int sr = rect.row + r;
      if (sr < 0 || sr >= x.dim(1)) continue;
      for (int col = 0; col < rect.width; ++col) {
        const int sc = rect.col + col;
        if (sc >= 0 && sc < x.dim(2)) out.at(c, r, col) = x.at(c, sr, sc);
      }
    }
  }
  return out;
}

std::vector<TopPatch> top_patches_for_filter(const Model& model, const ImageSource& images,
                                             const std::string& layer, int filter, std::size_t n,
                                             bool with_reconstruction, int threads) {
  require_images(images);
  const std::size_t index = spatial_layer_index(model.net, layer);
  const Shape shape = shape_trace(model.net)[index].shape;
  if (filter < 0 || filter >= shape[0]) {
    throw SelectionError("filter " + std::to_string(filter) + " out of range for layer '" + layer + "' with " +
                         std::to_string(shape[0]) + " channels");
  }
  const std::size_t available = images.size() * static_cast<std::size_t>(shape[1]) * shape[2];
  if (n > available) {
    throw DataError("requested " + std::to_string(n) + " patches but only " + std::to_string(available) +
                    " positions exist");
  }
  if (n == 0) return {};

  struct Hit {
    float value;
    std::string image_id;
    std::size_t image;
    int row, col;
  };
  std::vector<std::vector<Hit>> per_image(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const ForwardTrace trace = forward_one(model, images, i, layer);
    const Tensor& act = trace.activations[index];
    const std::string id = images.id(i);
    for (int r = 0; r < shape[1]; ++r) {
      for (int c = 0; c < shape[2]; ++c) per_image[i].push_back({act.at(filter, r, c), id, i, r, c});
    }
  });
  std::vector<Hit> hits;
  for (auto& v : per_image) std::move(v.begin(), v.end(), std::back_inserter(hits));
  auto better = [](const Hit& a, const Hit& b) {
    if (a.value != b.value) return a.value > b.value;
    return std::tie(a.image_id, a.row, a.col) < std::tie(b.image_id, b.row, b.col);
  };
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);
  hits.resize(n);

  std::vector<TopPatch> out(n);
  std::map<std::size_t, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < n; ++i) by_image[hits[i].image].push_back(i);
  for (const auto& [image, members] : by_image) {
    const Image raster = model.resized(images.load(image));
    const ForwardTrace trace = forward_one(model, images, image, layer);
    const Tensor& act = trace.activations[index];
    for (std::size_t m : members) {
      const Hit& hit = hits[m];
      TopPatch& tp = out[m];
      tp.activation = hit.value;
      PatchRecord& rec = tp.record;
      rec.image_id = hit.image_id;
      rec.image_index = image;
      rec.layer = layer;
      rec.row = hit.row;
      rec.col = hit.col;
      rec.bbox = neuron_bbox(model.net, layer, hit.row, hit.col);
      rec.pixels = crop_padded(raster, rec.bbox.full);
      rec.activation.resize(shape[0]);
      for (int k = 0; k < shape[0]; ++k) rec.activation[k] = act.at(k, hit.row, hit.col);
      if (with_reconstruction) {
        const Tensor recon = reconstruct(model.net, model.weights, trace,
                                         Selection::neuron(layer, filter, hit.row, hit.col));
        tp.reconstruction = crop_tensor(recon, rec.bbox.full);
      }
    }
  }
  return out;
}

}  // namespace cnnprobe
