#include <doctest.h>

#include <random>

#include "cnnprobe/error.hpp"
#include "cnnprobe/ops.hpp"
#include "oracles.hpp"

using namespace cnnprobe;
using oracle::max_abs_diff;
using oracle::random_tensor;

TEST_CASE("conv: 1x1 identity kernel returns the input") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({1, 5, 5}, rng);
  const ConvWeights w{Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}, 0.0f)};
  CHECK(conv_forward(x, w, 1, 0) == x);
  CHECK(conv_reverse(x, w, 1, 0, x.shape()) == x);
}

TEST_CASE("conv: zero input gives the bias everywhere") {
  std::mt19937_64 rng(2);
  ConvWeights w = oracle::random_conv(3, 2, 3, 3, rng);
  const Tensor y = conv_forward(Tensor({2, 6, 6}), w, 1, 1);
  for (int k = 0; k < 3; ++k) {
    for (float v : y.channel(k)) CHECK(v == w.bias[static_cast<std::size_t>(k)]);
  }
}

TEST_CASE("conv: matches the naive loop oracle") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 5, 5}, rng);
  const ConvWeights w = oracle::random_conv(3, 2, 3, 3, rng);
  const Tensor got = conv_forward(x, w, 1, 1);
  CHECK(got.shape() == Shape{3, 5, 5});
  CHECK(max_abs_diff(got, oracle::naive_conv(x, w, 1, 1)) <= 1e-5);

  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> d(1, 4);
    const int c = d(rng), k = d(rng), kh = d(rng), kw = d(rng), s = d(rng) % 3 + 1, p = d(rng) - 1;
    const Tensor xi = random_tensor({c, 12, 11}, rng);
    const ConvWeights wi = oracle::random_conv(k, c, kh, kw, rng);
    const Tensor ref = oracle::naive_conv(xi, wi, s, p);
    CHECK(max_abs_diff(conv_forward(xi, wi, s, p), ref) <= 1e-5 * std::max(1.0, oracle::max_abs(ref)));
  }
}

TEST_CASE("conv_reverse: delta response places the kernel") {
  std::mt19937_64 rng(4);
  const ConvWeights w = oracle::random_conv(2, 3, 3, 3, rng);
  Tensor y({2, 4, 4});
  y.at(1, 2, 1) = 2.0f;
  const Tensor x = conv_reverse(y, w, 1, 0, {3, 6, 6});
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < 6; ++r) {
      for (int col = 0; col < 6; ++col) {
        const bool inside = r >= 2 && r < 5 && col >= 1 && col < 4;
        const float expect =
            inside ? 2.0f * w.kernels[((1 * 3 + c) * 3 + (r - 2)) * 3 + (col - 1)] : 0.0f;
        CHECK(x.at(c, r, col) == doctest::Approx(expect));
      }
    }
  }
}

TEST_CASE("conv_reverse equals full convolution with flipped kernels") {
  std::mt19937_64 rng(5);
  const ConvWeights w = oracle::random_conv(3, 2, 3, 2, rng);
  const Tensor y = random_tensor({3, 4, 5}, rng);
  const Tensor got = conv_reverse(y, w, 1, 0, {2, 6, 6});
  // Flipped-kernel convolution of y padded by (kh-1, kw-1), as in the
  // reconstruction formula.
  ConvWeights flipped{Tensor({2, 3, 3, 2}), Tensor({2}, 0.0f)};
  for (int k = 0; k < 3; ++k) {
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
          flipped.kernels[((c * 3 + k) * 3 + (2 - i)) * 2 + (1 - j)] = w.kernels[((k * 2 + c) * 3 + i) * 2 + j];
        }
      }
    }
  }
  // Pad asymmetrically by hand: rows by 2, cols by 1.
  Tensor padded({3, 8, 7});
  for (int k = 0; k < 3; ++k) {
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 5; ++c) padded.at(k, r + 2, c + 1) = y.at(k, r, c);
    }
  }
  const Tensor ref = oracle::naive_conv(padded, flipped, 1, 0);
  CHECK(max_abs_diff(got, ref) <= 1e-5);
}

TEST_CASE("conv errors") {
  std::mt19937_64 rng(6);
  const ConvWeights w = oracle::random_conv(2, 3, 3, 3, rng);
  CHECK_THROWS_AS(conv_forward(Tensor({2, 5, 5}), w, 1, 0), ShapeError);
  CHECK_THROWS_AS(conv_forward(Tensor({3, 2, 2}), w, 1, 0), ShapeError);
  CHECK_THROWS_AS(conv_reverse(Tensor({2, 4, 4}), w, 1, 0, {3, 5, 5}), ShapeError);
}

TEST_CASE("relu clamps in both directions") {
  const Tensor x({3}, std::vector<float>{-1, 0, 2});
  const Tensor expect({3}, std::vector<float>{0, 0, 2});
  CHECK(relu_forward(x) == expect);
  CHECK(relu_reverse(x) == expect);
  CHECK(relu_reverse(relu_forward(x)) == relu_forward(x));
  const Tensor pos({2}, std::vector<float>{0.5f, 3});
  CHECK(relu_forward(pos) == pos);
}

TEST_CASE("relu output is never negative") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({3, 4, 4}, rng, -5, 5);
    const Tensor f = relu_forward(x), r = relu_reverse(x);
    for (float v : f.data()) CHECK(v >= 0.0f);
    for (float v : r.data()) CHECK(v >= 0.0f);
  }
}

TEST_CASE("maxpool basics and ties") {
  const Tensor x({1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const PoolResult p = maxpool_forward(x, {2, 2, 2});
  CHECK(p.values.values() == std::vector<float>{4});
  CHECK(p.switches.locations[0] == Switches::Location{1, 1});

  const PoolResult c = maxpool_forward(Tensor({2, 4, 6}, 3.0f), {2, 2, 2});
  for (std::size_t i = 0; i < c.switches.locations.size(); ++i) {
    const int oy = static_cast<int>(i / 3) % 2, ox = static_cast<int>(i % 3);
    CHECK(c.switches.locations[i] == Switches::Location{oy * 2, ox * 2});
  }
}

TEST_CASE("maxpool matches the naive per-window oracle") {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({4, 8, 8}, rng);
  const PoolResult p = maxpool_forward(x, {2, 2, 2});
  const auto ref = oracle::naive_maxpool(x, 2, 2, 2);
  CHECK(p.values == ref.values);
  for (std::size_t i = 0; i < ref.argmax.size(); ++i) {
    CHECK(p.switches.locations[i].row == ref.argmax[i].first);
    CHECK(p.switches.locations[i].col == ref.argmax[i].second);
  }

  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> d(1, 3);
    const int wh = d(rng), ww = d(rng), s = d(rng);
    // Quantised values force plenty of ties.
    Tensor xi = random_tensor({3, 9, 10}, rng, 0, 4);
    for (float& v : xi.data()) v = static_cast<float>(static_cast<int>(v));
    const PoolResult got = maxpool_forward(xi, {wh, ww, s});
    const auto r = oracle::naive_maxpool(xi, wh, ww, s);
    REQUIRE(got.values == r.values);
    for (std::size_t i = 0; i < r.argmax.size(); ++i) {
      CHECK(got.switches.locations[i] == Switches::Location{r.argmax[i].first, r.argmax[i].second});
    }
  }
}

TEST_CASE("maxpool_reverse places values at the switches") {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({2, 6, 6}, rng, 0.1f, 1.0f);
  const PoolResult p = maxpool_forward(x, {2, 2, 2});
  const Tensor back = maxpool_reverse(p.values, p.switches, x.shape(), {2, 2, 2});
  const auto ref = oracle::naive_maxpool(x, 2, 2, 2);
  std::size_t nonzeros = 0;
  for (int c = 0; c < 2; ++c) {
    for (int r = 0; r < 6; ++r) {
      for (int col = 0; col < 6; ++col) {
        if (back.at(c, r, col) != 0.0f) {
          ++nonzeros;
          CHECK(back.at(c, r, col) == x.at(c, r, col));
        }
      }
    }
  }
  CHECK(nonzeros == ref.argmax.size());
  CHECK(oracle::max_abs(maxpool_reverse(Tensor(p.values.shape()), p.switches, x.shape(), {2, 2, 2})) == 0.0);
}

TEST_CASE("maxpool_reverse matches the explicit frozen-switch matrix") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({2, 6, 6}, rng);
    const int window = trial % 2 == 0 ? 2 : 3;
    const int stride = trial % 3 == 0 ? 1 : 2;
    const PoolResult p = maxpool_forward(x, {window, window, stride});
    const auto ref = oracle::naive_maxpool(x, window, window, stride);
    const auto m = oracle::pool_matrix(ref, x.shape());
    const Tensor y = random_tensor(p.values.shape(), rng);
    const Tensor got = maxpool_reverse(y, p.switches, x.shape(), {window, window, stride});
    for (std::size_t j = 0; j < x.size(); ++j) {
      double expect = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) expect += m[i][j] * y[i];
      CHECK(got[j] == doctest::Approx(expect).epsilon(1e-6));
    }
  }
}

TEST_CASE("maxpool geometry errors") {
  const PoolResult p = maxpool_forward(Tensor({1, 4, 4}), {2, 2, 2});
  CHECK_THROWS_AS(maxpool_reverse(Tensor({1, 3, 3}), p.switches, {1, 4, 4}, {2, 2, 2}), ShapeError);
  CHECK_THROWS_AS(maxpool_forward(Tensor({1, 1, 1}), {2, 2, 2}), ShapeError);
  Switches bad = p.switches;
  bad.locations[0] = {3, 3};
  CHECK_THROWS_AS(maxpool_reverse(Tensor({1, 2, 2}), bad, {1, 4, 4}, {2, 2, 2}), ShapeError);
}

TEST_CASE("fc identity and reshape") {
  FcWeights w{Tensor({4, 4}), Tensor({4}, 0.0f)};
  for (int i = 0; i < 4; ++i) w.weights[static_cast<std::size_t>(i * 4 + i)] = 1.0f;
  const Tensor x({1, 2, 2}, std::vector<float>{1, -2, 3, 4});
  CHECK(fc_forward(x, w).values() == x.values());
  const Tensor back = fc_reverse(fc_forward(x, w), w, x.shape());
  CHECK(back == x);
  CHECK_THROWS_AS(fc_forward(Tensor({5}), w), ShapeError);
  CHECK_THROWS_AS(fc_reverse(Tensor({3}), w, {4}), ShapeError);
}

TEST_CASE("fc over a map equals a full-size convolution") {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({8, 3, 3}, rng);
  const FcWeights fc = oracle::random_fc(16, 72, rng);
  const ConvWeights conv{fc.weights.reshaped({16, 8, 3, 3}), fc.bias};
  const Tensor a = fc_forward(x, fc);
  const Tensor b = conv_forward(x, conv, 1, 0);
  CHECK(b.shape() == Shape{16, 1, 1});
  CHECK(max_abs_diff(a, b.reshaped({16})) <= 1e-5);
}

TEST_CASE("adjoint identities on random instances") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> d(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = d(rng), k = d(rng), kh = d(rng), kw = d(rng), s = d(rng) % 3 + 1, p = d(rng) - 1;
    const Tensor x = random_tensor({c, 9, 10}, rng);
    ConvWeights w = oracle::random_conv(k, c, kh, kw, rng);
    for (float& b : w.bias.data()) b = 0.0f;
    const Tensor fx = conv_forward(x, w, s, p);
    const Tensor y = random_tensor(fx.shape(), rng);
    CHECK(oracle::adjoint_err(fx, y, x, conv_reverse(y, w, s, p, x.shape())) <= 1e-4);

    FcWeights f = oracle::random_fc(d(rng) * 3, static_cast<int>(x.size()), rng);
    const Tensor fy = random_tensor({f.out_features()}, rng);
    const Tensor fxv = fc_forward(x, {f.weights, Tensor({f.out_features()}, 0.0f)});
    CHECK(oracle::adjoint_err(fxv, fy, x, fc_reverse(fy, f, x.shape())) <= 1e-4);
  }
}

TEST_CASE("reverse ops are linear") {
  std::mt19937_64 rng(13);
  const ConvWeights w = oracle::random_conv(3, 2, 3, 3, rng);
  const FcWeights f = oracle::random_fc(5, 32, rng);
  const Tensor x = random_tensor({2, 4, 4}, rng);
  const PoolResult pr = maxpool_forward(x, {2, 2, 2});
  const float a = 1.7f;
  auto combine = [&](const Tensor& y1, const Tensor& y2) {
    Tensor out = y1;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * y1[i] + y2[i];
    return out;
  };
  auto check = [&](auto&& rev, const Shape& yshape) {
    const Tensor y1 = random_tensor(yshape, rng), y2 = random_tensor(yshape, rng);
    const Tensor lhs = rev(combine(y1, y2));
    const Tensor rhs = combine(rev(y1), rev(y2));
    CHECK(max_abs_diff(lhs, rhs) <= 1e-5 * std::max(1.0, oracle::max_abs(lhs)));
  };
  check([&](const Tensor& y) { return conv_reverse(y, w, 1, 1, {2, 4, 4}); }, {3, 4, 4});
  check([&](const Tensor& y) { return fc_reverse(y, f, {2, 4, 4}); }, {5});
  check([&](const Tensor& y) { return maxpool_reverse(y, pr.switches, x.shape(), {2, 2, 2}); }, {2, 2, 2});
}

TEST_CASE("softmax is stable and normalised") {
  const Tensor u = softmax_forward(Tensor({3}, std::vector<float>{0, 0, 0}));
  for (float v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
  const Tensor big = softmax_forward(Tensor({3}, std::vector<float>{1000, 0, -1000}));
  CHECK(big.all_finite());
  CHECK(big[0] > 0.99f);
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor({10}, rng, -20, 20);
    const Tensor p = softmax_forward(logits);
    double sum = 0.0;
    for (float v : p.data()) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    for (float& v : logits.data()) v += 37.5f;
    CHECK(max_abs_diff(softmax_forward(logits), p) <= 1e-6);
  }
}

TEST_CASE("kernels keep finite inputs finite") {
  std::mt19937_64 rng(15);
  const Tensor x = random_tensor({3, 7, 7}, rng, -100, 100);
  const ConvWeights w = oracle::random_conv(4, 3, 3, 3, rng);
  CHECK(conv_forward(x, w, 2, 1).all_finite());
  CHECK(conv_reverse(conv_forward(x, w, 1, 1), w, 1, 1, x.shape()).all_finite());
  CHECK(maxpool_forward(x, {3, 3, 2}).values.all_finite());
}
