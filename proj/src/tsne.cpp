#include "cnnprobe/tsne.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "cnnprobe/error.hpp"
#include "cnnprobe/parallel.hpp"

namespace cnnprobe {

namespace {

constexpr double kEntropyTolerance = 1e-7;  // nats
constexpr int kMaxBisections = 200;

std::vector<double> squared_distances(const std::vector<std::vector<float>>& v) {
  const std::size_t n = v.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < v[i].size(); ++k) {
        const double diff = static_cast<double>(v[i][k]) - v[j][k];
        s += diff * diff;
      }
      d[i * n + j] = d[j * n + i] = s;
    }
  }
  return d;
}

// Finds beta so that the entropy of row i's conditional distribution equals
// log(perplexity). Writes the normalised row into `row`.
void calibrate_row(const double* dist, std::size_t n, std::size_t i, double target_entropy,
                   double* row, double& beta_out, double& perplexity_out) {
  double min_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) min_d = std::min(min_d, dist[j]);
  }
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double entropy = 0.0;
  for (int it = 0; it < kMaxBisections; ++it) {
    // Distances are shifted by their minimum; the shift cancels on
    // normalisation and keeps the largest weight at exactly 1.
    double sum = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) {
        row[j] = 0.0;
        continue;
      }
      const double shifted = dist[j] - min_d;
      row[j] = std::exp(-beta * shifted);
      sum += row[j];
      weighted += shifted * row[j];
    }
    entropy = std::log(sum) + beta * weighted / sum;
    const double diff = entropy - target_entropy;
    if (std::abs(diff) < kEntropyTolerance) break;
    if (diff > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
    } else {
      hi = beta;
      beta = (beta + lo) / 2.0;
    }
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += row[j];
  for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  beta_out = beta;
  perplexity_out = std::exp(entropy);
}

void check_feasible(std::size_t n, double perplexity) {
  if (n < 4) throw DataError("t-SNE needs at least 4 points, got " + std::to_string(n));
  if (!(perplexity > 0.0) || !(perplexity < (static_cast<double>(n) - 1.0) / 3.0)) {
    throw DataError("perplexity " + std::to_string(perplexity) + " is infeasible for " + std::to_string(n) +
                    " points; at least " + std::to_string(min_points_for_perplexity(perplexity)) +
                    " points are required");
  }
}

}  // namespace

std::size_t min_points_for_perplexity(double perplexity) {
  const double bound = 3.0 * perplexity + 1.0;  // need n > bound
  return std::max<std::size_t>(4, static_cast<std::size_t>(std::floor(bound)) + 1);
}

Affinities joint_affinities(const std::vector<std::vector<float>>& vectors, double perplexity) {
  const std::size_t n = vectors.size();
  check_feasible(n, perplexity);
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) throw DataError("t-SNE input vectors differ in length");
  }
  const std::vector<double> dist = squared_distances(vectors);
  Affinities a;
  a.n = n;
  a.p.assign(n * n, 0.0);
  a.beta.assign(n, 0.0);
  a.perplexity.assign(n, 0.0);
  const double target = std::log(perplexity);
  std::vector<double> cond(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    calibrate_row(&dist[i * n], n, i, target, &cond[i * n], a.beta[i], a.perplexity[i]);
  }
  const double norm = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a.p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / norm;
  }
  return a;
}

std::vector<double> output_affinities(const Embedding& y) {
  const std::size_t n = y.size();
  std::vector<double> q(n * n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y[i].x - y[j].x, dy = y[i].y - y[j].y;
      q[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
      z += q[i * n + j];
    }
  }
  for (double& v : q) v /= z;
  return q;
}

double kl_divergence(std::span<const double> p, const Embedding& y) {
  const std::vector<double> q = output_affinities(y);
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], std::numeric_limits<double>::min()));
  }
  return kl;
}

std::vector<double> kl_gradient(std::span<const double> p, const Embedding& y, int threads) {
  const std::size_t n = y.size();
  // Unnormalised kernel rows, partial sums per row, then a fixed-order total
  // so the result does not depend on the thread count.
  std::vector<double> w(n * n, 0.0), row_sum(n, 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y[i].x - y[j].x, dy = y[i].y - y[j].y;
      w[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
      s += w[i * n + j];
    }
    row_sum[i] = s;
  });
  double z = 0.0;
  for (double s : row_sum) z += s;

  std::vector<double> grad(2 * n, 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    double gx = 0.0, gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double wij = w[i * n + j];
      const double mult = (p[i * n + j] - wij / z) * wij;
      gx += mult * (y[i].x - y[j].x);
      gy += mult * (y[i].y - y[j].y);
    }
    grad[2 * i] = 4.0 * gx;
    grad[2 * i + 1] = 4.0 * gy;
  });
  return grad;
}

TsneResult tsne(const std::vector<std::vector<float>>& vectors, const TsneOptions& options) {
  Affinities aff = joint_affinities(vectors, options.perplexity);
  const std::size_t n = aff.n;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, options.init_sigma);
  Embedding y(n);
  for (auto& pt : y) {
    pt.x = gauss(rng);
    pt.y = gauss(rng);
  }

  std::vector<double> p = aff.p;
  if (options.exaggeration_iterations > 0) {
    for (double& v : p) v *= options.exaggeration;
  }
  std::vector<double> update(2 * n, 0.0), gains(2 * n, 1.0);
  TsneResult result;
  double momentum = options.initial_momentum;
  for (int iter = 0; iter < options.iterations; ++iter) {
    if (iter == options.exaggeration_iterations && options.exaggeration_iterations > 0) p = aff.p;
    if (iter == options.momentum_switch_iteration) momentum = options.final_momentum;

    const std::vector<double> grad = kl_gradient(p, y, options.threads);
    for (std::size_t k = 0; k < 2 * n; ++k) {
      // Delta-bar-delta gains: grow while the gradient keeps pointing against
      // the running update, shrink otherwise.
      const bool flip = (grad[k] > 0.0) != (update[k] > 0.0);
      gains[k] = std::max(flip ? gains[k] + 0.2 : gains[k] * 0.8, 0.01);
      update[k] = momentum * update[k] - options.learning_rate * gains[k] * grad[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i].x += update[2 * i];
      y[i].y += update[2 * i + 1];
      mx += y[i].x;
      my += y[i].y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (auto& pt : y) {
      pt.x -= mx;
      pt.y -= my;
    }

    const int done = iter + 1;
    if ((options.kl_interval > 0 && done % options.kl_interval == 0) || done == options.iterations) {
      result.kl_history.emplace_back(done, kl_divergence(aff.p, y));
    }
  }
  result.embedding = std::move(y);
  return result;
}

}  // namespace cnnprobe
