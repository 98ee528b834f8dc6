#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "cnnprobe/cli.hpp"
#include "cnnprobe/image.hpp"
#include "cnnprobe/weights_io.hpp"
#include "oracles.hpp"

using namespace cnnprobe;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "cnnprobe");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> v;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, '\t');) v.push_back(f);
  return v;
}

// layer -> (size, stride) from the arch output's receptive-field section
std::map<std::string, std::pair<std::string, std::string>> rf_rows(const std::string& out) {
  std::map<std::string, std::pair<std::string, std::string>> rows;
  bool in_rf = false;
  for (const auto& l : lines(out)) {
    if (l.empty()) {
      in_rf = true;
      continue;
    }
    if (!in_rf || l[0] == '#') continue;
    const auto f = fields(l);
    rows[f[0]] = {f[1], f[2]};
  }
  return rows;
}

Image noise_image(int size, int lo, int hi, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(lo, hi);
  Image img(size, size);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(d(rng));
  return img;
}

// Writes n images into dir and a manifest listing them; returns the manifest path.
std::string write_dataset(const oracle::TempDir& dir, const std::vector<Image>& images, const std::string& prefix = "im") {
  std::string manifest;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string name = prefix + std::to_string(i) + ".ppm";
    write_image(dir.file(name), images[i]);
    manifest += name + "\n";
  }
  const std::string path = dir.file(prefix + "_manifest.txt");
  oracle::write_text(path, manifest);
  return path;
}

const std::string kTinyA = oracle::fixture_path("tiny_a.net");

}  // namespace

TEST_CASE("arch prints the builtin receptive-field tables") {
  const Result vgg = run({"arch", "--builtin", "vggcnn16"});
  REQUIRE(vgg.code == 0);
  const auto v = rf_rows(vgg.out);
  CHECK(v.at("p5") == std::make_pair(std::string("212"), std::string("32")));
  CHECK(v.at("c1_1") == std::make_pair(std::string("3"), std::string("1")));
  CHECK(v.count("fc6") == 0);

  const Result alex = run({"arch", "--builtin", "alexcnn"});
  REQUIRE(alex.code == 0);
  const auto a = rf_rows(alex.out);
  CHECK(a.at("c5") == std::make_pair(std::string("151"), std::string("16")));
  CHECK(a.at("p5") == std::make_pair(std::string("167"), std::string("32")));
  CHECK(alex.out.find("p5\tpool\t(256,6,6)") != std::string::npos);

  const Result spec = run({"arch", "--spec", kTinyA});
  CHECK(spec.code == 0);
  CHECK(spec.out.find("fc1\tfc\t(5)\n") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  const Result bad = run({"arch", "--spec", oracle::fixture_path("bad.net")});
  CHECK(bad.code == 2);
  CHECK(bad.err.find(":3:") != std::string::npos);
  CHECK(run({"arch"}).code == 2);
  CHECK(run({"arch", "--builtin", "lenet"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"arch", "--builtin", "alexcnn", "--spec", kTinyA}).code == 2);
  CHECK(run({"arch", "--spec", "/nonexistent/net.txt"}).code == 3);
}

TEST_CASE("help exits 0 everywhere") {
  CHECK(run({"--help"}).code == 0);
  for (const char* sub : {"arch", "reconstruct", "embed", "sparsity", "top-patches", "forward", "random-weights"}) {
    const Result r = run({sub, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--") != std::string::npos);
  }
}

TEST_CASE("reconstruct writes one image per layer") {
  oracle::TempDir dir;
  std::mt19937_64 rng(1);
  write_image(dir.file("cat.ppm"), noise_image(16, 0, 255, rng));
  const std::string out = dir.file("out");

  const Result r = run({"reconstruct", "--spec", kTinyA, "--random-weights", "11", "--image", dir.file("cat.ppm"),
                        "--layers", "all-conv", "--out", out});
  REQUIRE(r.code == 0);
  CHECK(lines(r.out).size() == 2);
  const Image c2 = read_image(out + "/cat_c2.ppm");
  CHECK(c2.width == 16);
  CHECK(c2.height == 16);
  CHECK(oracle::TempDir::list(out) == std::vector<std::string>{"cat_c1.ppm", "cat_c2.ppm"});

  CHECK(run({"reconstruct", "--spec", kTinyA, "--random-weights", "11", "--image", dir.file("cat.ppm"), "--layers",
             "all", "--out", out})
            .code == 0);
  CHECK(oracle::TempDir::list(out).size() == 7);

  // a single neuron only lights up its receptive field (c1 at (0,0) sees rows/cols 0..1);
  // everything outside keeps the display value of zero
  const Result n = run({"reconstruct", "--spec", kTinyA, "--random-weights", "11", "--image", dir.file("cat.ppm"),
                        "--layers", "c1", "--select", "neuron:0,0,0", "--out", dir.file("n")});
  REQUIRE(n.code == 0);
  const Image img = read_image(dir.file("n/cat_c1.ppm"));
  const std::uint8_t zero = img.at(15, 15, 0);
  bool inside_differs = false;
  for (int row = 0; row < 16; ++row) {
    for (int col = 0; col < 16; ++col) {
      for (int ch = 0; ch < 3; ++ch) {
        if (row > 1 || col > 1) {
          CHECK(img.at(row, col, ch) == zero);
        } else {
          inside_differs = inside_differs || img.at(row, col, ch) != zero;
        }
      }
    }
  }
  CHECK(inside_differs);

  CHECK(run({"reconstruct", "--spec", kTinyA, "--random-weights", "11", "--image", dir.file("cat.ppm"), "--layers",
             "c1", "--select", "neuron:0,99,0", "--out", dir.file("bad")})
            .code == 2);
  CHECK(run({"reconstruct", "--spec", kTinyA, "--random-weights", "11", "--image", dir.file("cat.ppm"), "--layers",
             "c1,nope", "--out", dir.file("bad")})
            .code == 2);
  CHECK(oracle::TempDir::list(dir.file("bad")).empty());
}

TEST_CASE("failures publish nothing") {
  oracle::TempDir dir;
  std::mt19937_64 rng(2);
  write_image(dir.file("cat.ppm"), noise_image(16, 0, 255, rng));
  const Result r = run({"reconstruct", "--spec", kTinyA, "--weights", dir.file("missing.cnnw"), "--image",
                        dir.file("cat.ppm"), "--layers", "all-conv", "--out", dir.file("out")});
  CHECK(r.code == 3);
  CHECK(oracle::TempDir::list(dir.file("out")).empty());

  oracle::write_text(dir.file("junk.cnnw"), "not a weight file");
  CHECK(run({"forward", "--spec", kTinyA, "--weights", dir.file("junk.cnnw"), "--image", dir.file("cat.ppm")}).code ==
        3);
  CHECK(run({"forward", "--spec", kTinyA, "--random-weights", "1", "--image", dir.file("nope.ppm")}).code == 3);
}

TEST_CASE("random weights round-trip through a file") {
  oracle::TempDir dir;
  std::mt19937_64 rng(3);
  write_image(dir.file("x.ppm"), noise_image(16, 0, 255, rng));
  REQUIRE(run({"random-weights", "--spec", kTinyA, "--seed", "11", "--out", dir.file("w.cnnw")}).code == 0);
  const Result from_file =
      run({"forward", "--spec", kTinyA, "--weights", dir.file("w.cnnw"), "--image", dir.file("x.ppm"), "--k", "5"});
  const Result seeded =
      run({"forward", "--spec", kTinyA, "--random-weights", "11", "--image", dir.file("x.ppm"), "--k", "5"});
  REQUIRE(from_file.code == 0);
  CHECK(from_file.out == seeded.out);
  CHECK(lines(from_file.out).size() == 6);
}

TEST_CASE("forward labels and probabilities") {
  oracle::TempDir dir;
  Image flat(4, 4);
  write_image(dir.file("flat.ppm"), flat);
  oracle::write_text(dir.file("uniform.net"), "input 3 4 4\nsoftmax prob\n");
  oracle::write_text(dir.file("labels.txt"), "");
  oracle::write_text(dir.file("three.txt"), "cat\r\ndog\n\nbird\n");
  // 48 inputs but only 3 labels
  CHECK(run({"forward", "--spec", dir.file("uniform.net"), "--random-weights", "1", "--image", dir.file("flat.ppm"),
             "--labels", dir.file("three.txt")})
            .code == 2);

  oracle::write_text(dir.file("three_class.net"), "input 3 1 1\nsoftmax prob\n");
  write_image(dir.file("px.ppm"), Image(1, 1));
  const Result r = run({"forward", "--spec", dir.file("three_class.net"), "--random-weights", "1", "--image",
                        dir.file("px.ppm"), "--labels", dir.file("three.txt"), "--k", "3"});
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 4);
  CHECK(fields(l[1])[1] == "cat");
  CHECK(fields(l[3])[1] == "bird");
  for (int i = 1; i <= 3; ++i) CHECK(std::stod(fields(l[static_cast<std::size_t>(i)])[2]) == doctest::Approx(1.0 / 3));
  CHECK(run({"forward", "--spec", dir.file("three_class.net"), "--random-weights", "1", "--image", dir.file("px.ppm"),
             "--k", "4"})
            .code == 2);
  CHECK(run({"forward", "--spec", kTinyA, "--random-weights", "1", "--image", dir.file("px.ppm"), "--labels",
             dir.file("missing.txt")})
            .code == 3);
}

TEST_CASE("embed is deterministic and writes both artifacts") {
  oracle::TempDir dir;
  std::mt19937_64 rng(4);
  std::vector<Image> images;
  for (int i = 0; i < 4; ++i) images.push_back(noise_image(16, 0, 255, rng));
  const std::string manifest = write_dataset(dir, images);
  auto embed = [&](const std::string& out, const std::string& seed, const std::string& threads) {
    return run({"embed", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest, "--layer", "p2",
                "--perplexity", "5", "--iterations", "300", "--seed", seed, "--grid", "4", "--thumb", "6",
                "--threads", threads, "--out", dir.file(out)});
  };
  const Result a = embed("a", "3", "1");
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("patches\t36\nfinal_kl\t", 0) == 0);
  CHECK(embed("b", "3", "4").code == 0);
  CHECK(embed("c", "4", "1").code == 0);
  const std::string ta = oracle::read_text(dir.file("a/embedding.tsv"));
  CHECK(ta == oracle::read_text(dir.file("b/embedding.tsv")));
  CHECK(ta != oracle::read_text(dir.file("c/embedding.tsv")));
  CHECK(lines(ta).size() == 37);
  CHECK(fields(lines(ta)[1]).size() == 6);
  const Image grid = read_image(dir.file("a/grid.ppm"));
  CHECK(grid.width == 24);
  CHECK(grid.height == 24);
}

TEST_CASE("embed data errors") {
  oracle::TempDir dir;
  std::mt19937_64 rng(5);
  const std::string manifest = write_dataset(dir, {noise_image(16, 0, 255, rng)});
  const Result few = run({"embed", "--spec", kTinyA, "--random-weights", "1", "--manifest", manifest, "--layer", "p2",
                          "--sampling", "random:3", "--out", dir.file("few")});
  CHECK(few.code == 4);
  CHECK(few.err.find("4") != std::string::npos);
  CHECK(oracle::TempDir::list(dir.file("few")).empty());

  oracle::write_text(dir.file("empty.txt"), "# nothing\n\n");
  CHECK(run({"embed", "--spec", kTinyA, "--random-weights", "1", "--manifest", dir.file("empty.txt"), "--layer", "p2"})
            .code == 4);
  CHECK(run({"embed", "--spec", kTinyA, "--random-weights", "1", "--manifest", manifest, "--layer", "fc1"}).code == 2);
  CHECK(run({"embed", "--spec", kTinyA, "--random-weights", "1", "--manifest", manifest, "--layer", "p2",
             "--sampling", "some:3"})
            .code == 2);
  CHECK(run({"embed", "--spec", kTinyA, "--random-weights", "1", "--manifest", dir.file("none.txt"), "--layer", "p2"})
            .code == 3);
}

TEST_CASE("embed grid separates two image populations") {
  oracle::TempDir dir;
  std::mt19937_64 rng(6);
  std::vector<Image> images;
  for (int i = 0; i < 5; ++i) images.push_back(noise_image(16, 0, 30, rng));
  for (int i = 0; i < 5; ++i) images.push_back(noise_image(16, 200, 255, rng));
  const std::string manifest = write_dataset(dir, images);
  const Result r = run({"embed", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest, "--layer", "p2",
                        "--sampling", "all", "--perplexity", "10", "--grid", "16", "--thumb", "4", "--out",
                        dir.file("out")});
  REQUIRE(r.code == 0);

  // Class of each patch from its image id, then the canvas class of each cell
  // via the brute-force grid oracle over the written embedding.
  std::vector<int> cls;
  Embedding e;
  for (const auto& l : lines(oracle::read_text(dir.file("out/embedding.tsv")))) {
    if (l[0] == '#') continue;
    const auto f = fields(l);
    const std::string id = f[1];
    const int index = std::stoi(id.substr(id.rfind("im") + 2));
    cls.push_back(index < 5 ? 0 : 1);
    e.push_back({std::stod(f[4]), std::stod(f[5])});
  }
  REQUIRE(cls.size() == 90);
  const auto cells = oracle::brute_force_grid(e, 16);
  int same = 0, pairs = 0;
  for (int row = 0; row < 16; ++row) {
    for (int col = 0; col < 16; ++col) {
      const int here = cls[cells[static_cast<std::size_t>(row * 16 + col)]];
      if (col + 1 < 16) {
        same += here == cls[cells[static_cast<std::size_t>(row * 16 + col + 1)]];
        ++pairs;
      }
      if (row + 1 < 16) {
        same += here == cls[cells[static_cast<std::size_t>((row + 1) * 16 + col)]];
        ++pairs;
      }
    }
  }
  CHECK(static_cast<double>(same) / pairs >= 0.9);
}

TEST_CASE("sparsity writes reports and comparisons") {
  oracle::TempDir dir;
  std::mt19937_64 rng(7);
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) images.push_back(noise_image(16, 0, 255, rng));
  const std::string manifest = write_dataset(dir, images);
  const Result a = run({"sparsity", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest, "--out",
                        dir.file("a")});
  REQUIRE(a.code == 0);
  CHECK(a.out == oracle::read_text(dir.file("a/sparsity.tsv")));
  CHECK(lines(a.out).size() == 5);
  CHECK(oracle::TempDir::list(dir.file("a")) == std::vector<std::string>{"sparsity.ppm", "sparsity.tsv"});

  const Result b = run({"sparsity", "--spec", kTinyA, "--random-weights", "12", "--manifest", manifest, "--threads",
                        "2", "--compare", dir.file("a/sparsity.tsv"), "--out", dir.file("b")});
  REQUIRE(b.code == 0);
  const auto cmp = lines(oracle::read_text(dir.file("b/comparison.tsv")));
  REQUIRE(cmp.size() == 5);
  CHECK(fields(cmp[1])[0] == "r1");

  const Result pre = run({"sparsity", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest,
                          "--pre-relu", "--out", dir.file("pre")});
  CHECK(pre.out.find("c1\t") != std::string::npos);
  CHECK(run({"sparsity", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest, "--layers", "zz"}).code ==
        2);
}

TEST_CASE("top-patches ranks and writes two images") {
  oracle::TempDir dir;
  std::mt19937_64 rng(8);
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) images.push_back(noise_image(16, 0, 255, rng));
  const std::string manifest = write_dataset(dir, images);
  const Result one = run({"top-patches", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest,
                          "--layer", "c2", "--filter", "1", "--n", "1", "--out", dir.file("one")});
  REQUIRE(one.code == 0);
  CHECK(lines(one.out).size() == 2);
  CHECK(oracle::TempDir::list(dir.file("one")) == std::vector<std::string>{"c2_f1_patches.ppm", "c2_f1_recon.ppm"});

  const Result nine = run({"top-patches", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest,
                           "--layer", "c2", "--filter", "1", "--out", dir.file("nine")});
  REQUIRE(nine.code == 0);
  const auto rows = lines(nine.out);
  REQUIRE(rows.size() == 10);
  for (std::size_t i = 2; i < rows.size(); ++i) CHECK(std::stod(fields(rows[i - 1])[4]) >= std::stod(fields(rows[i])[4]));
  CHECK(fields(rows[1]) == fields(lines(one.out)[1]));

  CHECK(run({"top-patches", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest, "--layer", "c2",
             "--filter", "6", "--out", dir.file("bad")})
            .code == 2);
  CHECK(run({"top-patches", "--spec", kTinyA, "--random-weights", "11", "--manifest", manifest, "--layer", "c2",
             "--filter", "0", "--n", "1000", "--out", dir.file("bad")})
            .code == 4);
  CHECK(oracle::TempDir::list(dir.file("bad")).empty());
}
