#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace cnnprobe {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

using Embedding = std::vector<Point2>;

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 100.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iteration = 250;
  double exaggeration = 4.0;
  int exaggeration_iterations = 100;
  double init_sigma = 1e-4;
  std::uint64_t seed = 0;
  int threads = 1;
  // KL(P||Q) is recorded every this many iterations and after the last one.
  int kl_interval = 50;
};

struct TsneResult {
  Embedding embedding;
  std::vector<std::pair<int, double>> kl_history;  // (iterations completed, KL)
};

// Exact O(N^2) t-SNE into two dimensions. Requires at least 4 points and
// perplexity < (N - 1) / 3; throws DataError otherwise.
TsneResult tsne(const std::vector<std::vector<float>>& vectors, const TsneOptions& options);

// Smallest point count for which the perplexity is feasible.
std::size_t min_points_for_perplexity(double perplexity);

// Joint input affinities. p is the row-major N x N symmetrised matrix
// (p_ij = (p_j|i + p_i|j) / 2N, zero diagonal). beta holds the per-point
// Gaussian precision 1 / (2 sigma_i^2) found by bisection, and
// perplexity the achieved 2^H(P_i) of each conditional distribution.
struct Affinities {
  std::size_t n = 0;
  std::vector<double> p;
  std::vector<double> beta;
  std::vector<double> perplexity;
};

Affinities joint_affinities(const std::vector<std::vector<float>>& vectors, double perplexity);

// Student-t output affinities q_ij, normalised to sum to one.
std::vector<double> output_affinities(const Embedding& y);

double kl_divergence(std::span<const double> p, const Embedding& y);

// dKL/dy_i = 4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2),
// returned as interleaved (x, y) pairs.
std::vector<double> kl_gradient(std::span<const double> p, const Embedding& y, int threads = 1);

}  // namespace cnnprobe
