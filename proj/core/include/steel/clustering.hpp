#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "steel/matrix.hpp"

namespace steel {

struct Clustering {
  std::int64_t k = 0;
  std::vector<std::int32_t> assignment;  // one index per point, < k
  Matrix centroids;                      // k x d
  double sse = 0.0;
  std::vector<double> sse_history;  // SSE after each Lloyd iteration
};

// Lloyd's algorithm with k-means++ seeding. Deterministic per seed. Empty
// clusters are re-seeded from the point farthest from its current centroid,
// so the result always has k nonempty clusters when the input has at least
// k distinct points.
Clustering kmeans_cluster(const Matrix& points, std::int64_t k,
                          std::uint64_t seed, std::int64_t max_iters = 100);

// Mean silhouette over points, Euclidean metric. a = mean intra-cluster
// distance excluding self, b = min over other clusters of mean distance;
// points in singleton clusters score 0 (the a-term is undefined there).
double silhouette_score(const Matrix& points, const Clustering& clustering);

// Same, from a precomputed symmetric distance matrix. Hierarchical search
// scans many k values against one distance matrix.
double silhouette_score_dist(const Matrix& dist,
                             std::span<const std::int32_t> assignment,
                             std::int64_t k);

Matrix pairwise_distances(const Matrix& points);

// Index of the subset member closest to the subset centroid; ties break to
// the lowest index.
std::int64_t medoid_of(const Matrix& points,
                       std::span<const std::int64_t> subset);

}  // namespace steel
