#include "steel/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "steel/errors.hpp"
#include "steel/rng.hpp"

namespace steel {

namespace {

std::int64_t nearest_centroid(const Matrix& centroids,
                              std::span<const double> point) {
  std::int64_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::int64_t c = 0; c < centroids.rows(); ++c) {
    const double d = sqdist(centroids.row(c), point);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

Clustering kmeans_cluster(const Matrix& points, std::int64_t k,
                          std::uint64_t seed, std::int64_t max_iters) {
  const std::int64_t m = points.rows();
  const std::int64_t d = points.cols();
  if (k < 1 || k > m) throw std::invalid_argument("kmeans: need 1 <= k <= M");
  if (!points.all_finite()) throw NumericError("kmeans: non-finite input");

  Rng rng(seed);
  Clustering out;
  out.k = k;
  out.centroids = Matrix(k, d);
  out.assignment.assign(static_cast<std::size_t>(m), 0);

  // k-means++ seeding.
  std::vector<double> min_d(static_cast<std::size_t>(m),
                            std::numeric_limits<double>::infinity());
  std::int64_t first = static_cast<std::int64_t>(rng.below(m));
  std::copy_n(points.row(first).data(), d, out.centroids.row(0).data());
  for (std::int64_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::int64_t i = 0; i < m; ++i) {
      min_d[i] = std::min(min_d[i], sqdist(points.row(i), out.centroids.row(c - 1)));
      total += min_d[i];
    }
    std::int64_t chosen = m - 1;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        acc += min_d[i];
        if (acc >= r) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<std::int64_t>(rng.below(m));
    }
    std::copy_n(points.row(chosen).data(), d, out.centroids.row(c).data());
  }

  std::vector<std::int64_t> counts(static_cast<std::size_t>(k));
  for (std::int64_t iter = 0; iter < max_iters; ++iter) {
    // Assign.
    bool changed = false;
    for (std::int64_t i = 0; i < m; ++i) {
      auto a = static_cast<std::int32_t>(nearest_centroid(out.centroids, points.row(i)));
      if (a != out.assignment[i]) changed = true;
      out.assignment[i] = a;
    }

    // Repair empty clusters: re-seed from the point farthest from its
    // centroid, then reassign that point.
    std::fill(counts.begin(), counts.end(), 0);
    for (std::int64_t i = 0; i < m; ++i) ++counts[out.assignment[i]];
    for (std::int64_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::int64_t far = -1;
      double far_d = -1.0;
      for (std::int64_t i = 0; i < m; ++i) {
        if (counts[out.assignment[i]] <= 1) continue;
        const double dist = sqdist(points.row(i), out.centroids.row(out.assignment[i]));
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      if (far < 0) break;  // fewer distinct points than k
      --counts[out.assignment[far]];
      std::copy_n(points.row(far).data(), d, out.centroids.row(c).data());
      out.assignment[far] = static_cast<std::int32_t>(c);
      ++counts[c];
      changed = true;
    }

    // Update means.
    out.centroids.fill(0.0);
    for (std::int64_t i = 0; i < m; ++i)
      axpy(1.0, points.row(i), out.centroids.row(out.assignment[i]));
    for (std::int64_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[c]);
      for (double& v : out.centroids.row(c)) v *= inv;
    }

    double sse = 0.0;
    for (std::int64_t i = 0; i < m; ++i)
      sse += sqdist(points.row(i), out.centroids.row(out.assignment[i]));
    out.sse = sse;
    out.sse_history.push_back(sse);
    if (!changed) break;
  }
  return out;
}

double silhouette_score(const Matrix& points, const Clustering& clustering) {
  return silhouette_score_dist(pairwise_distances(points),
                               clustering.assignment, clustering.k);
}

double silhouette_score_dist(const Matrix& dist,
                             std::span<const std::int32_t> assignment,
                             std::int64_t k) {
  const std::int64_t m = dist.rows();
  if (k < 2) throw std::invalid_argument("silhouette: need k >= 2");
  if (m < 3) throw std::invalid_argument("silhouette: need M >= 3");

  std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
  for (std::int64_t i = 0; i < m; ++i) {
    if (assignment[i] < 0 || assignment[i] >= k)
      throw std::invalid_argument("silhouette: assignment out of range");
    ++counts[assignment[i]];
  }
  for (std::int64_t c = 0; c < k; ++c)
    if (counts[c] == 0) throw std::invalid_argument("silhouette: empty cluster");

  double total = 0.0;
  std::vector<double> cluster_sum(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < m; ++i) {
    std::fill(cluster_sum.begin(), cluster_sum.end(), 0.0);
    for (std::int64_t j = 0; j < m; ++j)
      if (j != i) cluster_sum[assignment[j]] += dist(i, j);

    const std::int64_t own = assignment[i];
    if (counts[own] == 1) continue;  // singleton scores 0
    const double a = cluster_sum[own] / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < k; ++c) {
      if (c == own) continue;
      b = std::min(b, cluster_sum[c] / static_cast<double>(counts[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(m);
}

Matrix pairwise_distances(const Matrix& points) {
  const std::int64_t m = points.rows();
  Matrix dist(m, m);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = i + 1; j < m; ++j) {
      const double d = std::sqrt(sqdist(points.row(i), points.row(j)));
      dist(i, j) = d;
      dist(j, i) = d;
    }
  return dist;
}

std::int64_t medoid_of(const Matrix& points,
                       std::span<const std::int64_t> subset) {
  if (subset.empty()) throw std::invalid_argument("medoid_of: empty subset");
  const std::int64_t d = points.cols();
  std::vector<double> centroid(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t idx : subset) axpy(1.0, points.row(idx), centroid);
  const double inv = 1.0 / static_cast<double>(subset.size());
  for (double& v : centroid) v *= inv;

  std::int64_t best = subset[0];
  double best_d = std::numeric_limits<double>::infinity();
  for (std::int64_t idx : subset) {
    const double dist = sqdist(points.row(idx), centroid);
    if (dist < best_d || (dist == best_d && idx < best)) {
      best_d = dist;
      best = idx;
    }
  }
  return best;
}

}  // namespace steel
