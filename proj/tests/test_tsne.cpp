#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cnnprobe/error.hpp"
#include "cnnprobe/tsne.hpp"
#include "oracles.hpp"

using namespace cnnprobe;

namespace {

std::vector<std::vector<float>> gaussian_points(std::size_t n, std::size_t dim, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<float> g(0.0f, static_cast<float>(sigma));
  std::vector<std::vector<float>> v(n, std::vector<float>(dim));
  for (auto& p : v) {
    for (float& x : p) x = g(rng);
  }
  return v;
}

std::vector<std::vector<float>> two_clusters(std::mt19937_64& rng, std::vector<int>& labels) {
  std::normal_distribution<float> g(0.0f, 0.1f);
  std::vector<std::vector<float>> v;
  labels.clear();
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 20; ++i) {
      std::vector<float> p(5);
      for (float& x : p) x = g(rng);
      p[0] += 10.0f * static_cast<float>(c);
      v.push_back(p);
      labels.push_back(c);
    }
  }
  return v;
}

Embedding random_embedding(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Embedding y(n);
  for (auto& p : y) p = {g(rng), g(rng)};
  return y;
}

}  // namespace

TEST_CASE("feasibility checks") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(tsne(gaussian_points(3, 2, rng), {}), DataError);
  TsneOptions small;
  small.perplexity = 2.0;
  CHECK_THROWS_AS(tsne(gaussian_points(7, 2, rng), small), DataError);  // needs 2 < 6/3
  CHECK_NOTHROW(joint_affinities(gaussian_points(8, 2, rng), 2.0));
  CHECK(min_points_for_perplexity(30.0) == 92);
  CHECK(min_points_for_perplexity(2.0) == 8);
  CHECK(min_points_for_perplexity(0.5) == 4);
  try {
    tsne(gaussian_points(3, 2, rng), {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
  try {
    tsne(gaussian_points(10, 2, rng), {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("92") != std::string::npos);
  }
}

TEST_CASE("min_points_for_perplexity is the smallest feasible count") {
  for (double perp : {1.0, 2.5, 5.0, 10.0, 29.9, 30.0, 33.3}) {
    const std::size_t n = min_points_for_perplexity(perp);
    CHECK(perp < (static_cast<double>(n) - 1.0) / 3.0);
    if (n > 4) CHECK_FALSE(perp < (static_cast<double>(n) - 2.0) / 3.0);
  }
}

TEST_CASE("affinities are valid distributions with calibrated perplexity") {
  std::mt19937_64 rng(2);
  for (double perp : {3.0, 10.0}) {
    const auto x = gaussian_points(60, 6, rng);
    const Affinities a = joint_affinities(x, perp);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.n; ++i) {
      CHECK(a.p[i * a.n + i] == 0.0);
      for (std::size_t j = 0; j < a.n; ++j) {
        CHECK(a.p[i * a.n + j] >= 0.0);
        CHECK(a.p[i * a.n + j] == a.p[j * a.n + i]);
        sum += a.p[i * a.n + j];
      }
      const double h = oracle::conditional_entropy_bits(x, i, a.beta[i]);
      CHECK(std::abs(h - std::log2(perp)) < 1e-3);
      CHECK(std::abs(std::log2(a.perplexity[i]) - std::log2(perp)) < 1e-3);
    }
    CHECK(std::abs(sum - 1.0) < 1e-8);
  }
}

TEST_CASE("output affinities sum to one") {
  std::mt19937_64 rng(3);
  const auto q = output_affinities(random_embedding(30, rng));
  double sum = 0.0;
  for (double v : q) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) < 1e-8);
}

TEST_CASE("KL matches the naive recomputation") {
  std::mt19937_64 rng(4);
  const auto a = joint_affinities(gaussian_points(25, 4, rng), 5.0);
  const auto y = random_embedding(25, rng);
  CHECK(kl_divergence(a.p, y) == doctest::Approx(oracle::naive_kl(a.p, y)).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = joint_affinities(gaussian_points(20, 3, rng), 4.0);
    Embedding y = random_embedding(20, rng);
    const auto g = kl_gradient(a.p, y);
    double num = 0.0, den = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (int axis = 0; axis < 2; ++axis) {
        double& coord = axis == 0 ? y[i].x : y[i].y;
        const double saved = coord;
        coord = saved + h;
        const double up = oracle::naive_kl(a.p, y);
        coord = saved - h;
        const double down = oracle::naive_kl(a.p, y);
        coord = saved;
        const double fd = (up - down) / (2 * h);
        num += (fd - g[2 * i + axis]) * (fd - g[2 * i + axis]);
        den += fd * fd;
      }
    }
    CHECK(std::sqrt(num / den) < 1e-4);
  }
}

TEST_CASE("gradient does not depend on the thread count") {
  std::mt19937_64 rng(6);
  const auto a = joint_affinities(gaussian_points(50, 3, rng), 8.0);
  const auto y = random_embedding(50, rng);
  CHECK(kl_gradient(a.p, y, 1) == kl_gradient(a.p, y, 4));
}

TEST_CASE("two separated clusters are recovered") {
  std::mt19937_64 rng(7);
  std::vector<int> labels;
  const auto x = two_clusters(rng, labels);
  TsneOptions opts;
  opts.perplexity = 10.0;
  opts.seed = 3;
  const TsneResult r = tsne(x, opts);
  const auto groups = oracle::single_linkage_two(r.embedding);
  int same = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) same += groups[i] == labels[i];
  const int mis = std::min(same, static_cast<int>(labels.size()) - same);
  CHECK(mis == 0);
}

TEST_CASE("KL decreases after the early phase, runs are seeded") {
  std::mt19937_64 rng(8);
  const auto x = gaussian_points(60, 10, rng);
  TsneOptions opts;
  opts.perplexity = 10.0;
  opts.iterations = 400;
  opts.seed = 11;
  const TsneResult a = tsne(x, opts);
  REQUIRE(a.kl_history.size() == 8);
  CHECK(a.kl_history.front().first == 50);
  CHECK(a.kl_history.back().first == 400);
  CHECK(a.kl_history.back().second < a.kl_history.front().second);
  for (const auto& p : a.embedding) CHECK((std::isfinite(p.x) && std::isfinite(p.y)));

  const TsneResult b = tsne(x, opts);
  CHECK(a.embedding == b.embedding);
  opts.threads = 3;
  CHECK(tsne(x, opts).embedding == a.embedding);
  opts.threads = 1;
  opts.seed = 12;
  CHECK_FALSE(tsne(x, opts).embedding == a.embedding);
}

TEST_CASE("duplicated points end up together") {
  std::mt19937_64 rng(9);
  auto base = gaussian_points(25, 8, rng);
  std::vector<std::vector<float>> x;
  for (const auto& p : base) {
    x.push_back(p);
    x.push_back(p);
  }
  TsneOptions opts;
  opts.perplexity = 5.0;
  opts.seed = 4;
  const auto y = tsne(x, opts).embedding;
  std::vector<double> all;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = i + 1; j < y.size(); ++j) all.push_back(std::hypot(y[i].x - y[j].x, y[i].y - y[j].y));
  }
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(all.size() / 2), all.end());
  const double median = all[all.size() / 2];
  for (std::size_t i = 0; i < y.size(); i += 2) {
    CHECK(std::hypot(y[i].x - y[i + 1].x, y[i].y - y[i + 1].y) < median);
  }
}
