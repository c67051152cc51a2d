#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "vlmcpl/consensus_pfc.hpp"

namespace vlmcpl {

namespace {

using Centroids = std::vector<std::vector<double>>;

double squared_distance(std::span<const float> p, const std::vector<double>& c) {
  double d = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double diff = p[j] - c[j];
    d += diff * diff;
  }
  return d;
}

std::vector<double> to_vector(std::span<const float> p) { return {p.begin(), p.end()}; }

Centroids seed_plus_plus(const Matrix& points, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = points.rows;
  Centroids centroids;
  centroids.reserve(k);
  std::vector<bool> chosen(n, false);

  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  chosen[pick] = true;
  centroids.push_back(to_vector(points.row(pick)));

  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(points.row(i), centroids[0]);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : nearest) total += d;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (nearest[i] <= 0.0) continue;
        acc += nearest[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      // Every remaining point coincides with a centroid: draw uniformly among unchosen points.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(i);
      std::uniform_int_distribution<std::size_t> any(0, free.size() - 1);
      pick = free[any(rng)];
    }
    chosen[pick] = true;
    centroids.push_back(to_vector(points.row(pick)));
    for (std::size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], squared_distance(points.row(i), centroids.back()));
  }
  return centroids;
}

std::uint32_t nearest_centroid(std::span<const float> p, const Centroids& centroids, double* dist) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

void repair_empty(const Matrix& points, const Centroids& centroids, std::vector<std::uint32_t>& assign) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> sizes(k, 0);
  for (auto a : assign) ++sizes[a];
  for (std::size_t empty = 0; empty < k; ++empty) {
    if (sizes[empty] != 0) continue;
    std::size_t far = points.rows;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.rows; ++i) {
      if (sizes[assign[i]] < 2) continue;
      const double d = squared_distance(points.row(i), centroids[assign[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    // k <= N guarantees some cluster has two or more members.
    --sizes[assign[far]];
    assign[far] = static_cast<std::uint32_t>(empty);
    sizes[empty] = 1;
  }
}

ClusterAssignment lloyd(const Matrix& points, Centroids centroids, const KMeansParams& params) {
  const std::size_t n = points.rows, d = points.cols, k = centroids.size();
  std::vector<std::uint32_t> assign(n, 0);
  double previous = std::numeric_limits<double>::infinity();
  double inertia = 0.0;
  for (std::size_t iter = 0; iter < std::max<std::size_t>(params.max_iter, 1); ++iter) {
    for (std::size_t i = 0; i < n; ++i) assign[i] = nearest_centroid(points.row(i), centroids, nullptr);
    repair_empty(points, centroids, assign);

    std::vector<std::size_t> sizes(k, 0);
    for (auto& c : centroids) std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[assign[i]];
      const auto p = points.row(i);
      for (std::size_t j = 0; j < d; ++j) centroids[assign[i]][j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (auto& v : centroids[c]) v /= static_cast<double>(sizes[c]);

    inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += squared_distance(points.row(i), centroids[assign[i]]);
    if (inertia == 0.0 || (std::isfinite(previous) && std::abs(previous - inertia) < params.tol * previous))
      break;
    previous = inertia;
  }
  ClusterAssignment out;
  out.cluster_of = std::move(assign);
  out.inertia = inertia;
  out.centroids = Matrix(k, d);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) out.centroids(c, j) = static_cast<float>(centroids[c][j]);
  return out;
}

}  // namespace

Matrix l2_normalized(const Matrix& points) {
  Matrix out = points;
  for (std::size_t i = 0; i < out.rows; ++i) {
    double norm = 0.0;
    for (float v : out.row(i)) norm += static_cast<double>(v) * v;
    if (norm == 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm);
    for (float& v : out.row(i)) v = static_cast<float>(v * inv);
  }
  return out;
}

ClusterAssignment kmeans_pp(const Matrix& points, const KMeansParams& params) {
  if (params.k == 0) throw std::invalid_argument("kmeans_pp: k must be >= 1");
  if (params.k > points.rows)
    throw std::invalid_argument("kmeans_pp: k = " + std::to_string(params.k) + " exceeds N = " +
                                std::to_string(points.rows));
  for (float v : points.data)
    if (!std::isfinite(v)) throw std::invalid_argument("kmeans_pp: non-finite feature");

  ClusterAssignment best;
  bool have_best = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(params.restarts, 1); ++r) {
    std::mt19937_64 rng(params.seed + r);
    auto result = lloyd(points, seed_plus_plus(points, params.k, rng), params);
    if (!have_best || result.inertia < best.inertia) {
      best = std::move(result);
      have_best = true;
    }
  }
  return best;
}

}  // namespace vlmcpl
