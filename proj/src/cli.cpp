#include "cnnprobe/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cnnprobe/deconv.hpp"
#include "cnnprobe/embed.hpp"
#include "cnnprobe/error.hpp"
#include "cnnprobe/plot.hpp"
#include "cnnprobe/profile.hpp"
#include "cnnprobe/weights_io.hpp"

namespace cnnprobe {

namespace {

namespace fs = std::filesystem;

struct NetOptions {
  std::string builtin;
  std::string spec_path;
  std::string weights_path;
  std::optional<std::uint64_t> random_seed;
};

struct RunConfig {
  NetOptions net;
  std::string out_dir;
  bool png = false;
  int threads = 1;

  std::string image;
  std::string manifest;
  std::string layer;
  std::string layers;
  std::string selection = "full";
  std::string sampling = "top-norm:500";
  std::string labels;
  std::string compare;
  std::uint64_t seed = 0;
  double perplexity = 30.0;
  int iterations = 1000;
  int grid = 16;
  int thumb = 32;
  int filter = 0;
  std::size_t count = 9;
  std::size_t k = 5;
  bool pre_relu = false;
  std::optional<float> threshold;
  std::string weights_out;
};

std::string default_out_dir() {
  const char* env = std::getenv("CNNPROBE_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

void add_net_options(CLI::App* sub, NetOptions& o, bool weights) {
  auto* builtin = sub->add_option("--builtin", o.builtin, "Built-in architecture: vggcnn16 or alexcnn")
                      ->check(CLI::IsMember({"vggcnn16", "alexcnn"}));
  auto* spec = sub->add_option("--spec", o.spec_path, "Architecture DSL file");
  builtin->excludes(spec);
  spec->excludes(builtin);
  if (!weights) return;
  auto* w = sub->add_option("--weights", o.weights_path, "CNNW weight file (may carry a __mean__ tensor)");
  auto* r = sub->add_option("--random-weights", o.random_seed,
                            "Use seeded random weights instead of a weight file");
  w->excludes(r);
  r->excludes(w);
}

NetSpec load_net(const NetOptions& o) {
  if (!o.builtin.empty()) return builtin_netspec(*builtin_from_name(o.builtin));
  if (!o.spec_path.empty()) return load_netspec(o.spec_path);
  throw CLI::ValidationError("one of --builtin or --spec is required");
}

Model load_model(const NetOptions& o) {
  if (o.weights_path.empty() && !o.random_seed) {
    throw CLI::ValidationError("one of --weights or --random-weights is required");
  }
  Model m;
  m.net = load_net(o);
  if (o.random_seed) {
    m.weights = random_weights(m.net, *o.random_seed);
  } else {
    WeightFile file = read_weights(o.weights_path);
    m.weights = std::move(file.weights);
    m.mean = std::move(file.mean);
  }
  validate_weights(m.net, m.weights);
  return m;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string image_ext(const RunConfig& cfg) { return cfg.png ? ".png" : ".ppm"; }

std::string out_path(const RunConfig& cfg, const std::string& file) {
  return (fs::path(cfg.out_dir) / file).string();
}

void publish(const RunConfig& cfg, OutputBatch& batch) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError(IoError::Kind::kOpen, "cannot create output directory '" + cfg.out_dir + "'");
  batch.commit();
}

ManifestImages load_manifest(const std::string& path) {
  auto entries = read_manifest(path);
  if (entries.empty()) throw DataError("manifest '" + path + "' lists no images");
  return ManifestImages(std::move(entries));
}

Sampling parse_sampling(const std::string& text, std::uint64_t seed) {
  if (text == "all") return Sampling::all();
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string kind = text.substr(0, colon);
    std::size_t n = 0;
    try {
      std::size_t used = 0;
      n = std::stoul(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--sampling", "malformed count in '" + text + "'");
    }
    if (kind == "random") return Sampling::random(n, seed);
    if (kind == "top-norm") return Sampling::top_norm(n);
  }
  throw CLI::ValidationError("--sampling", "expected all, random:N or top-norm:N, got '" + text + "'");
}

// ---------------------------------------------------------------- commands

int cmd_arch(const RunConfig& cfg, std::ostream& out) {
  const NetSpec net = load_net(cfg.net);
  out << "# layer\tkind\tshape\n";
  const auto shapes = shape_trace(net);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    out << shapes[i].name << '\t' << kind_name(kind_of(net.layers[i])) << '\t'
        << shape_to_string(shapes[i].shape) << '\n';
  }
  out << '\n' << receptive_field_tsv(receptive_fields(net));
  return kExitOk;
}

int cmd_reconstruct(const RunConfig& cfg, std::ostream& out) {
  const Model model = load_model(cfg.net);
  std::vector<std::string> layers;
  if (cfg.layers == "all-conv" || cfg.layers == "all") {
    for (const LayerSpec& l : model.net.layers) {
      const LayerKind kind = kind_of(l);
      if (cfg.layers == "all-conv" ? kind == LayerKind::kConv : kind != LayerKind::kSoftmax) {
        layers.push_back(name_of(l));
      }
    }
  } else {
    layers = split_commas(cfg.layers);
  }
  if (layers.empty()) throw SelectionError("no layers selected");
  for (const auto& l : layers) model.net.index_of(l);

  const Image image = read_image(cfg.image);
  const ForwardTrace trace = run_forward(model.net, model.weights, model.prepare(image));
  const std::string stem = fs::path(cfg.image).stem().string();
  OutputBatch batch;
  std::vector<std::string> written;
  for (const auto& layer : layers) {
    const Tensor recon = reconstruct(model.net, model.weights, trace, parse_selection(cfg.selection, layer));
    written.push_back(out_path(cfg, stem + "_" + layer + image_ext(cfg)));
    batch.add(written.back(), encode_image_for(written.back(), to_displayable(recon)));
  }
  publish(cfg, batch);
  for (const auto& path : written) out << path << '\n';
  return kExitOk;
}

int cmd_embed(const RunConfig& cfg, std::ostream& out) {
  const Model model = load_model(cfg.net);
  const ManifestImages images = load_manifest(cfg.manifest);
  const Sampling sampling = parse_sampling(cfg.sampling, cfg.seed);
  const auto patches = extract_patches(model, images, cfg.layer, sampling, cfg.threads);

  TsneOptions topts;
  topts.perplexity = cfg.perplexity;
  topts.iterations = cfg.iterations;
  topts.seed = cfg.seed;
  topts.threads = cfg.threads;
  const TsneResult result = tsne(activation_vectors(patches), topts);

  std::ostringstream tsv;
  tsv << "# patch_id\timage_id\trow\tcol\tx\ty\n" << std::setprecision(9);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    tsv << i << '\t' << patches[i].image_id << '\t' << patches[i].row << '\t' << patches[i].col << '\t'
        << result.embedding[i].x << '\t' << result.embedding[i].y << '\n';
  }
  const auto cells = grid_fill(result.embedding, cfg.grid);
  OutputBatch batch;
  batch.add(out_path(cfg, "embedding.tsv"), tsv.str());
  const std::string grid_path = out_path(cfg, "grid" + image_ext(cfg));
  batch.add(grid_path, encode_image_for(grid_path, render_grid(patches, cells, cfg.grid, cfg.thumb)));
  publish(cfg, batch);
  if (!result.kl_history.empty()) {
    out << "patches\t" << patches.size() << "\nfinal_kl\t" << result.kl_history.back().second << '\n';
  }
  return kExitOk;
}

int cmd_sparsity(const RunConfig& cfg, std::ostream& out) {
  const Model model = load_model(cfg.net);
  const ManifestImages images = load_manifest(cfg.manifest);
  const auto layers = cfg.layers.empty() ? default_sparsity_layers(model.net, cfg.pre_relu) : split_commas(cfg.layers);
  if (layers.empty()) throw SelectionError("no layers to profile");
  SparsityOptions opts;
  opts.threshold = cfg.threshold;
  opts.threads = cfg.threads;
  const SparsityReport report = layer_sparsity(model, images, layers, opts);

  std::vector<std::vector<double>> series(1);
  for (const auto& l : report.layers) series[0].push_back(l.sparsity());
  OutputBatch batch;
  batch.add(out_path(cfg, "sparsity.tsv"), sparsity_tsv(report));
  if (!cfg.compare.empty()) {
    const Bytes other_bytes = read_file(cfg.compare);
    const SparsityReport other = parse_sparsity_tsv(std::string(other_bytes.begin(), other_bytes.end()));
    const auto rows = compare_sparsity(report, other);
    batch.add(out_path(cfg, "comparison.tsv"), comparison_tsv(rows));
    series.emplace_back();
    for (const auto& l : other.layers) series[1].push_back(l.sparsity());
  }
  const std::string plot_path = out_path(cfg, "sparsity" + image_ext(cfg));
  batch.add(plot_path, encode_image_for(plot_path, render_line_plot(series)));
  publish(cfg, batch);
  out << sparsity_tsv(report);
  return kExitOk;
}

int cmd_top_patches(const RunConfig& cfg, std::ostream& out) {
  const Model model = load_model(cfg.net);
  const ManifestImages images = load_manifest(cfg.manifest);
  const auto top = top_patches_for_filter(model, images, cfg.layer, cfg.filter, cfg.count, true, cfg.threads);
  if (top.empty()) throw DataError("no patches requested");
  std::vector<Image> patch_tiles, recon_tiles;
  out << "# rank\timage_id\trow\tcol\tactivation\n" << std::setprecision(9);
  for (std::size_t i = 0; i < top.size(); ++i) {
    patch_tiles.push_back(top[i].record.pixels);
    recon_tiles.push_back(to_displayable(*top[i].reconstruction));
    out << i + 1 << '\t' << top[i].record.image_id << '\t' << top[i].record.row << '\t' << top[i].record.col
        << '\t' << top[i].activation << '\n';
  }
  const int cols = static_cast<int>(top.size());
  const std::string base = cfg.layer + "_f" + std::to_string(cfg.filter);
  const std::string patches_path = out_path(cfg, base + "_patches" + image_ext(cfg));
  const std::string recon_path = out_path(cfg, base + "_recon" + image_ext(cfg));
  OutputBatch batch;
  batch.add(patches_path, encode_image_for(patches_path, tile_images(patch_tiles, cols, 2)));
  batch.add(recon_path, encode_image_for(recon_path, tile_images(recon_tiles, cols, 2)));
  publish(cfg, batch);
  return kExitOk;
}

int cmd_forward(const RunConfig& cfg, std::ostream& out) {
  const Model model = load_model(cfg.net);
  std::vector<std::string> labels;
  if (!cfg.labels.empty()) {
    const Bytes bytes = read_file(cfg.labels);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) labels.push_back(line);
    }
  }
  const ForwardTrace trace = run_forward(model.net, model.weights, model.prepare(read_image(cfg.image)));
  const auto preds = top_k_predictions(model.net, trace, cfg.k, labels);
  out << "# rank\tlabel\tprobability\n" << std::setprecision(9);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out << i + 1 << '\t' << preds[i].label << '\t' << preds[i].probability << '\n';
  }
  return kExitOk;
}

int cmd_random_weights(const RunConfig& cfg, std::ostream& out) {
  const NetSpec net = load_net(cfg.net);
  write_weights(cfg.weights_out, random_weights(net, cfg.seed));
  out << cfg.weights_out << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inspect CNN representations: receptive fields, deconvolutional reconstructions, "
               "t-SNE patch embeddings and activation sparsity.",
               "cnnprobe"};
  app.require_subcommand(1);
  RunConfig cfg;
  cfg.out_dir = default_out_dir();
  const char* out_help = "Output directory (default: $CNNPROBE_OUT_DIR or .)";

  auto* arch = app.add_subcommand("arch", "Print the shape trace and receptive-field table");
  add_net_options(arch, cfg.net, false);

  auto* recon = app.add_subcommand("reconstruct", "Project layer representations of an image back to pixels");
  add_net_options(recon, cfg.net, true);
  recon->add_option("--image", cfg.image, "Input image (PPM or PNG)")->required();
  recon->add_option("--layers", cfg.layers, "Comma-separated layers, all-conv, or all")->required();
  recon->add_option("--select", cfg.selection, "full | filter:K | neuron:K,R,C | topk:N")->capture_default_str();
  recon->add_option("--out", cfg.out_dir, out_help);
  recon->add_flag("--png", cfg.png, "Write PNG instead of PPM");

  auto* embed = app.add_subcommand("embed", "t-SNE embedding of image patches at a layer, with a grid canvas");
  add_net_options(embed, cfg.net, true);
  embed->add_option("--manifest", cfg.manifest, "Image manifest: one path per line, optional tab + label")->required();
  embed->add_option("--layer", cfg.layer, "Conv, relu or pool layer")->required();
  embed->add_option("--sampling", cfg.sampling, "all | random:N | top-norm:N")->capture_default_str();
  embed->add_option("--seed", cfg.seed, "Seed for sampling and t-SNE initialisation")->capture_default_str();
  embed->add_option("--perplexity", cfg.perplexity, "t-SNE perplexity")->capture_default_str()->check(CLI::PositiveNumber);
  embed->add_option("--iterations", cfg.iterations, "t-SNE iterations")->capture_default_str()->check(CLI::PositiveNumber);
  embed->add_option("--grid", cfg.grid, "Canvas cells per side")->capture_default_str()->check(CLI::PositiveNumber);
  embed->add_option("--thumb", cfg.thumb, "Thumbnail size in pixels")->capture_default_str()->check(CLI::PositiveNumber);
  embed->add_option("--threads", cfg.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  embed->add_option("--out", cfg.out_dir, out_help);
  embed->add_flag("--png", cfg.png, "Write PNG instead of PPM");

  auto* sparsity = app.add_subcommand("sparsity", "Fraction of zero activations per layer over a dataset");
  add_net_options(sparsity, cfg.net, true);
  sparsity->add_option("--manifest", cfg.manifest, "Image manifest")->required();
  sparsity->add_option("--layers", cfg.layers, "Comma-separated layers (default: relu and pool layers)");
  sparsity->add_flag("--pre-relu", cfg.pre_relu, "Profile conv outputs instead of relu outputs by default");
  sparsity->add_option("--threshold", cfg.threshold, "Count |v| <= threshold as zero");
  sparsity->add_option("--compare", cfg.compare, "Another sparsity.tsv to compare against");
  sparsity->add_option("--threads", cfg.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sparsity->add_option("--out", cfg.out_dir, out_help);
  sparsity->add_flag("--png", cfg.png, "Write PNG instead of PPM");

  auto* top = app.add_subcommand("top-patches", "Patches that most activate one filter, with reconstructions");
  add_net_options(top, cfg.net, true);
  top->add_option("--manifest", cfg.manifest, "Image manifest")->required();
  top->add_option("--layer", cfg.layer, "Conv, relu or pool layer")->required();
  top->add_option("--filter", cfg.filter, "Filter (channel) index")->required();
  top->add_option("--n", cfg.count, "Number of patches")->capture_default_str();
  top->add_option("--threads", cfg.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  top->add_option("--out", cfg.out_dir, out_help);
  top->add_flag("--png", cfg.png, "Write PNG instead of PPM");

  auto* forward = app.add_subcommand("forward", "Top-k class predictions for an image");
  add_net_options(forward, cfg.net, true);
  forward->add_option("--image", cfg.image, "Input image (PPM or PNG)")->required();
  forward->add_option("--labels", cfg.labels, "Class labels, one per line");
  forward->add_option("--k", cfg.k, "Number of predictions")->capture_default_str();

  auto* rw = app.add_subcommand("random-weights", "Write seeded random weights for a net as a CNNW file");
  add_net_options(rw, cfg.net, false);
  rw->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  rw->add_option("--out", cfg.weights_out, "Output CNNW path")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (cfg.png && !png_supported()) throw CLI::ValidationError("--png", "this build has no PNG support");
    if (arch->parsed()) return cmd_arch(cfg, out);
    if (recon->parsed()) return cmd_reconstruct(cfg, out);
    if (embed->parsed()) return cmd_embed(cfg, out);
    if (sparsity->parsed()) return cmd_sparsity(cfg, out);
    if (top->parsed()) return cmd_top_patches(cfg, out);
    if (forward->parsed()) return cmd_forward(cfg, out);
    if (rw->parsed()) return cmd_random_weights(cfg, out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const SelectionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace cnnprobe
