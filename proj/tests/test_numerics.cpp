#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "doctest.h"
#include "steel/clustering.hpp"
#include "steel/errors.hpp"
#include "steel/matrix.hpp"
#include "steel/mlp.hpp"
#include "steel/numerics.hpp"
#include "steel/optimizer.hpp"
#include "steel/rng.hpp"

using namespace steel;

namespace {

Matrix column_points(const std::vector<double>& values) {
  Matrix m(static_cast<std::int64_t>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<std::int64_t>(i), 0) = values[i];
  return m;
}

// Exhaustive oracle: best SSE over every assignment of M points to k labels
// (labels up to relabeling), with centroids at cluster means.
double best_partition_sse(const Matrix& points, std::int64_t k,
                          std::vector<std::int32_t>* best_assign = nullptr) {
  const std::int64_t m = points.rows();
  const std::int64_t d = points.cols();
  std::vector<std::int32_t> assign(static_cast<std::size_t>(m), 0);
  double best = std::numeric_limits<double>::infinity();
  const std::int64_t total = static_cast<std::int64_t>(std::pow(k, m));
  for (std::int64_t code = 0; code < total; ++code) {
    std::int64_t c = code;
    for (std::int64_t i = 0; i < m; ++i) {
      assign[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(c % k);
      c /= k;
    }
    Matrix centroids(k, d);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    bool empty = false;
    for (std::int64_t i = 0; i < m; ++i) {
      axpy(1.0, points.row(i), centroids.row(assign[static_cast<std::size_t>(i)]));
      ++counts[assign[static_cast<std::size_t>(i)]];
    }
    for (std::int64_t cc = 0; cc < k; ++cc) {
      if (counts[static_cast<std::size_t>(cc)] == 0) {
        empty = true;
        break;
      }
      for (double& v : centroids.row(cc))
        v /= static_cast<double>(counts[static_cast<std::size_t>(cc)]);
    }
    if (empty) continue;
    double sse = 0.0;
    for (std::int64_t i = 0; i < m; ++i)
      sse += sqdist(points.row(i), centroids.row(assign[static_cast<std::size_t>(i)]));
    if (sse < best) {
      best = sse;
      if (best_assign) *best_assign = assign;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("kmeans recovers the optimal 2-partition of two 1-D clumps") {
  const Matrix points = column_points({0.0, 0.1, 10.0, 10.1});
  std::vector<std::int32_t> oracle_assign;
  const double oracle_sse = best_partition_sse(points, 2, &oracle_assign);

  const Clustering c = kmeans_cluster(points, 2, 7);
  CHECK(c.sse == doctest::Approx(oracle_sse).epsilon(1e-12));
  CHECK(c.assignment[0] == c.assignment[1]);
  CHECK(c.assignment[2] == c.assignment[3]);
  CHECK(c.assignment[0] != c.assignment[2]);
  std::vector<double> centroids = {c.centroids(0, 0), c.centroids(1, 0)};
  std::sort(centroids.begin(), centroids.end());
  CHECK(centroids[0] == doctest::Approx(0.05));
  CHECK(centroids[1] == doctest::Approx(10.05));
}

TEST_CASE("kmeans degenerate cases") {
  const Matrix points = column_points({1.0, 2.0, 4.0, 9.0});
  SUBCASE("k = M gives zero SSE") {
    const Clustering c = kmeans_cluster(points, 4, 3);
    CHECK(c.sse == doctest::Approx(0.0));
    std::set<std::int32_t> used(c.assignment.begin(), c.assignment.end());
    CHECK(used.size() == 4);
  }
  SUBCASE("k = 1 centroid is the global mean") {
    const Clustering c = kmeans_cluster(points, 1, 3);
    CHECK(c.centroids(0, 0) == doctest::Approx(4.0));
  }
  SUBCASE("k > M rejected") {
    CHECK_THROWS_AS(kmeans_cluster(points, 5, 3), std::invalid_argument);
  }
  SUBCASE("non-finite input rejected") {
    Matrix bad = points;
    bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(kmeans_cluster(bad, 2, 3), NumericError);
  }
}

TEST_CASE("kmeans is deterministic and SSE never increases across iterations") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix points(30, 3);
    for (double& v : points.storage()) v = rng.normal() * 3.0;
    const std::uint64_t seed = rng.next_u64();
    const Clustering a = kmeans_cluster(points, 4, seed);
    const Clustering b = kmeans_cluster(points, 4, seed);
    CHECK(a.assignment == b.assignment);
    CHECK(a.centroids.storage() == b.centroids.storage());
    for (std::size_t i = 1; i < a.sse_history.size(); ++i)
      CHECK(a.sse_history[i] <= a.sse_history[i - 1] + 1e-9);
  }
}

TEST_CASE("silhouette on two tight clumps is 1") {
  const Matrix points = column_points({0.0, 0.0, 10.0, 10.0});
  Clustering c;
  c.k = 2;
  c.assignment = {0, 0, 1, 1};
  CHECK(silhouette_score(points, c) == doctest::Approx(1.0));
}

TEST_CASE("silhouette of overlapping identical clusters is 0") {
  const Matrix points = column_points({5.0, 5.0, 5.0, 5.0});
  Clustering c;
  c.k = 2;
  c.assignment = {0, 1, 0, 1};
  CHECK(silhouette_score(points, c) == doctest::Approx(0.0));
}

TEST_CASE("silhouette requires at least 2 clusters and stays in [-1, 1]") {
  Clustering single;
  single.k = 1;
  single.assignment = {0, 0, 0};
  CHECK_THROWS_AS(silhouette_score(column_points({1, 2, 3}), single),
                  std::invalid_argument);

  Rng rng(5);
  for (int rep = 0; rep < 30; ++rep) {
    const std::int64_t m = 6 + static_cast<std::int64_t>(rng.below(20));
    Matrix points(m, 2);
    for (double& v : points.storage()) v = rng.normal();
    const std::int64_t k = 2 + static_cast<std::int64_t>(rng.below(3));
    const Clustering c = kmeans_cluster(points, k, rng.next_u64());
    const double s = silhouette_score(points, c);
    CHECK(s <= 1.0 + 1e-12);
    CHECK(s >= -1.0 - 1e-12);
  }
}

TEST_CASE("medoid selection") {
  Matrix points(3, 2);
  points(0, 0) = 0; points(0, 1) = 0;
  points(1, 0) = 0; points(1, 1) = 1;
  points(2, 0) = 1; points(2, 1) = 0;
  const std::vector<std::int64_t> all = {0, 1, 2};
  CHECK(medoid_of(points, all) == 0);

  const std::vector<std::int64_t> single = {2};
  CHECK(medoid_of(points, single) == 2);

  // (0,1) and (1,0) are equidistant from their centroid: lowest index wins.
  const std::vector<std::int64_t> pair = {1, 2};
  CHECK(medoid_of(points, pair) == 1);

  CHECK_THROWS_AS(medoid_of(points, std::span<const std::int64_t>{}),
                  std::invalid_argument);

  // membership on random subsets
  Rng rng(9);
  Matrix cloud(40, 4);
  for (double& v : cloud.storage()) v = rng.normal();
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::int64_t> subset;
    for (std::int64_t i = 0; i < 40; ++i)
      if (rng.uniform() < 0.3) subset.push_back(i);
    if (subset.empty()) subset.push_back(0);
    const std::int64_t m = medoid_of(cloud, subset);
    CHECK(std::find(subset.begin(), subset.end(), m) != subset.end());
  }
}

TEST_CASE("adam first step moves by ~lr in sign direction") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::adam;
  cfg.lr = 0.01;
  cfg.eps = 1e-12;
  std::vector<double> params = {1.0, -2.0, 3.0};
  std::vector<double> grads = {0.5, -1.5, 2.0};
  Optimizer opt(cfg, std::array<std::int64_t, 1>{3});
  opt.step(params, grads);
  CHECK(params[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(params[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(params[2] == doctest::Approx(3.0 - 0.01).epsilon(1e-6));
}

TEST_CASE("zero gradient at step one leaves parameters unchanged") {
  OptimizerConfig cfg;
  std::vector<double> params = {1.0, 2.0};
  const std::vector<double> before = params;
  std::vector<double> grads = {0.0, 0.0};
  Optimizer opt(cfg, std::array<std::int64_t, 1>{2});
  opt.step(params, grads);
  CHECK(params == before);
}

TEST_CASE("lamb with zero weights reduces to the adam step") {
  OptimizerConfig adam_cfg;
  adam_cfg.kind = OptimizerKind::adam;
  adam_cfg.lr = 0.01;
  OptimizerConfig lamb_cfg = adam_cfg;
  lamb_cfg.kind = OptimizerKind::lamb;

  std::vector<double> p_adam = {0.0, 0.0, 0.0};
  std::vector<double> p_lamb = {0.0, 0.0, 0.0};
  std::vector<double> grads = {0.3, -0.2, 0.9};
  Optimizer a(adam_cfg, std::array<std::int64_t, 1>{3});
  Optimizer l(lamb_cfg, std::array<std::int64_t, 1>{3});
  a.step(p_adam, grads);
  l.step(p_lamb, grads);
  CHECK(p_adam == p_lamb);
}

TEST_CASE("optimizer_step is deterministic and rejects bad input") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::lamb;
  std::vector<double> grads = {0.1, 0.2, -0.3, 0.4};
  auto run = [&]() {
    std::vector<double> params = {1.0, -1.0, 0.5, 2.0};
    Optimizer opt(cfg, std::array<std::int64_t, 1>{4});
    for (int i = 0; i < 5; ++i) opt.step(params, grads);
    return params;
  };
  CHECK(run() == run());

  std::vector<double> params = {1.0, 2.0};
  Optimizer opt(cfg, std::array<std::int64_t, 1>{2});
  std::vector<double> bad = {1.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(opt.step(params, bad), NumericError);
  std::vector<double> wrong_size = {1.0};
  CHECK_THROWS_AS(opt.step(params, wrong_size), std::invalid_argument);
}

TEST_CASE("one-cycle schedule hits its anchor points") {
  CHECK(onecycle_lr(0, 10000, 4e-4, 1e-3, 1000) == doctest::Approx(4e-4));
  CHECK(onecycle_lr(1000, 10000, 4e-4, 1e-3, 1000) == doctest::Approx(1e-3));
  CHECK(onecycle_lr(10000, 10000, 4e-4, 1e-3, 1000) <= 1e-2 * 1e-3);
  // default warmup is a tenth of the total
  CHECK(onecycle_lr(1000, 10000, 4e-4, 1e-3) == doctest::Approx(1e-3));
  // clamping beyond the end
  CHECK(onecycle_lr(10500, 10000, 4e-4, 1e-3) ==
        onecycle_lr(10000, 10000, 4e-4, 1e-3));
  CHECK_THROWS_AS(onecycle_lr(0, 10, 2e-3, 1e-3), std::invalid_argument);
}

TEST_CASE("sinusoidal embedding basics") {
  const auto at_zero = sinusoidal_embed(0.0, 8);
  for (std::size_t i = 0; i < at_zero.size(); i += 2) {
    CHECK(at_zero[i] == doctest::Approx(0.0));
    CHECK(at_zero[i + 1] == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(sinusoidal_embed(1.0, 7), std::invalid_argument);

  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto e = sinusoidal_embed(rng.uniform() * 5000.0, 32);
    for (double v : e) {
      CHECK(v <= 1.0);
      CHECK(v >= -1.0);
    }
  }
}

TEST_CASE("sinusoidal embeddings are pairwise distinct over t = 0..1000") {
  const std::int64_t dim = 64;
  std::vector<std::vector<double>> embeds;
  embeds.reserve(1001);
  for (int t = 0; t <= 1000; ++t) embeds.push_back(sinusoidal_embed(t, dim));
  std::set<std::vector<double>> unique(embeds.begin(), embeds.end());
  CHECK(unique.size() == embeds.size());
}

TEST_CASE("grad_check agrees with simple closed forms") {
  auto square = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  const std::vector<double> x = {3.0};
  const std::vector<double> grad = {6.0};
  CHECK(grad_check(square, x, grad) < 1e-8);

  auto constant = [](std::span<const double>) { return 4.2; };
  const std::vector<double> zero = {0.0};
  CHECK(grad_check(constant, x, zero) < 1e-10);

  auto bad = [](std::span<const double>) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(grad_check(bad, x, grad), NumericError);
}

TEST_CASE("3-hidden-layer gelu MLP backward passes the finite-difference check") {
  Rng rng(21);
  MlpNet net = MlpNet::random({64, 16, 16, 16, 1},
                              {Activation::gelu, Activation::gelu,
                               Activation::gelu, Activation::identity},
                              rng);
  Matrix input(4, 64);
  for (double& v : input.storage()) v = rng.normal();

  // Loss: half the squared sum of outputs over the batch.
  auto flatten = [](const MlpNet& n) {
    std::vector<double> flat;
    for (auto block : n.param_blocks()) flat.insert(flat.end(), block.begin(), block.end());
    return flat;
  };
  auto unflatten = [](MlpNet& n, std::span<const double> flat) {
    std::size_t off = 0;
    for (auto block : n.param_blocks()) {
      std::copy(flat.begin() + off, flat.begin() + off + block.size(), block.begin());
      off += block.size();
    }
  };

  MlpNet probe = net;
  auto f = [&](std::span<const double> flat) {
    unflatten(probe, flat);
    const Matrix out = probe.forward(input);
    double loss = 0.0;
    for (double v : out.storage()) loss += 0.5 * v * v;
    return loss;
  };

  MlpNet::ForwardCache cache;
  const Matrix out = net.forward(input, &cache);
  const MlpNet::Grads grads = net.backward(cache, out);
  std::vector<double> analytic;
  for (std::size_t l = 0; l < grads.w.size(); ++l) {
    analytic.insert(analytic.end(), grads.w[l].storage().begin(),
                    grads.w[l].storage().end());
    analytic.insert(analytic.end(), grads.b[l].begin(), grads.b[l].end());
  }
  CHECK(grad_check(f, flatten(net), analytic) < 1e-6);
}

TEST_CASE("mlp parameter count matches the width formula") {
  MlpNet net({5, 7, 3}, {Activation::gelu, Activation::identity});
  CHECK(net.param_count() == 5 * 7 + 7 + 7 * 3 + 3);
}
