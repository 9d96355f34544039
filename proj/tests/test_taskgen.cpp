#include <cmath>
#include <sstream>

#include "doctest.h"
#include "steel/episode_io.hpp"
#include "steel/errors.hpp"
#include "steel/rng.hpp"
#include "steel/serialize.hpp"
#include "steel/taskgen.hpp"

using namespace steel;

TEST_CASE("sample_task is deterministic and respects the angle range") {
  TaskDistributionConfig cfg;
  const TaskSpec a = sample_task(cfg, 42, 7);
  const TaskSpec b = sample_task(cfg, 42, 7);
  CHECK(a.angle == b.angle);
  CHECK(a.id == 7);
  CHECK(a.seed == 42);

  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const TaskSpec t = sample_task(cfg, rng.next_u64());
    CHECK(t.angle >= cfg.angle_min);
    CHECK(t.angle < cfg.angle_max);
  }
}

TEST_CASE("task angles look uniform: Monte-Carlo mean within 3 sigma") {
  TaskDistributionConfig cfg;
  const int n = 1000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    sum += sample_task(cfg, substream(99, "test/angles", i)).angle;
  const double mean = sum / n;
  const double expected = 0.5 * (cfg.angle_min + cfg.angle_max);
  const double sigma = (cfg.angle_max - cfg.angle_min) / std::sqrt(12.0) /
                       std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - expected) < 3.0 * sigma);
}

TEST_CASE("task angles from distinct seeds are uncorrelated") {
  TaskDistributionConfig cfg;
  const int n = 1000;
  std::vector<double> angles(n);
  for (int i = 0; i < n; ++i)
    angles[i] = sample_task(cfg, substream(7, "test/corr", i)).angle;
  double mean = 0.0;
  for (double a : angles) mean += a;
  mean /= n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    num += (angles[i] - mean) * (angles[i + 1] - mean);
    den += (angles[i] - mean) * (angles[i] - mean);
  }
  CHECK(std::abs(num / den) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("episode sizes and class balance") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 5);
  const Episode ep = sample_episode(cfg, task, 16, 20, 11);
  CHECK(ep.support.size() == 16 * 5);
  CHECK(ep.query.size() == 20 * 5);

  std::vector<int> counts(5, 0);
  for (std::int32_t label : ep.support.labels) ++counts[label];
  for (int c : counts) CHECK(c == 16);

  const Episode one = sample_episode(cfg, task, 1, 1, 11);
  CHECK(one.support.size() == 5);

  CHECK_THROWS_AS(sample_episode(cfg, task, 0, 1, 11), std::invalid_argument);
  CHECK_THROWS_AS(sample_episode(cfg, task, 1, 0, 11), std::invalid_argument);
}

TEST_CASE("fixed seed gives a byte-identical episode") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 5);
  const Episode a = sample_episode(cfg, task, 4, 3, 123);
  const Episode b = sample_episode(cfg, task, 4, 3, 123);
  CHECK(episode_to_json(a) == episode_to_json(b));
}

TEST_CASE("episode JSONL round trip preserves the payload at f32 precision") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 17, 3);
  const Episode ep = sample_episode(cfg, task, 2, 2, 9);
  const std::string line = episode_to_json(ep);
  const Episode back = episode_from_json(line);
  CHECK(episode_to_json(back) == line);
  CHECK(back.way == ep.way);
  CHECK(back.shots == ep.shots);
  CHECK(back.support.labels == ep.support.labels);
  CHECK(back.task.id == ep.task.id);

  std::stringstream stream;
  write_episodes_jsonl(stream, {ep, ep});
  const auto episodes = read_episodes_jsonl(stream);
  CHECK(episodes.size() == 2);

  CHECK_THROWS_AS(episode_from_json("{not json"), FormatError);
  CHECK_THROWS_AS(episode_from_json("{\"task\":{}}"), FormatError);
}

TEST_CASE("featurize is frozen: identical outputs across calls and episodes") {
  TaskDistributionConfig cfg;
  const Backbone bb = make_backbone(cfg);
  std::vector<double> x = {0.3, -1.2};
  std::vector<double> f1(cfg.feature_dim), f2(cfg.feature_dim);
  featurize(bb, x, f1);
  featurize(bb, x, f2);
  CHECK(f1 == f2);

  const Backbone bb2 = make_backbone(cfg);
  CHECK(bb.projection.storage() == bb2.projection.storage());
  CHECK(bb.bias == bb2.bias);

  std::vector<double> wrong_dim = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(featurize(bb, wrong_dim, f1), std::invalid_argument);
}

TEST_CASE("zero input through a zero-bias projection lands at tanh(0)") {
  TaskDistributionConfig cfg;
  Backbone bb = make_backbone(cfg);
  std::fill(bb.bias.begin(), bb.bias.end(), 0.0);
  std::vector<double> zero = {0.0, 0.0};
  std::vector<double> out(cfg.feature_dim, 1.0);
  featurize(bb, zero, out);
  for (double v : out) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("featurize is Lipschitz with the projection operator norm") {
  TaskDistributionConfig cfg;
  Backbone bb = make_backbone(cfg);

  // Power iteration on P^T P estimates sigma_max^2.
  std::vector<double> v = {1.0, 0.3};
  double eig = 0.0;
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<double> w(static_cast<std::size_t>(cfg.feature_dim), 0.0);
    for (std::int64_t i = 0; i < bb.projection.rows(); ++i)
      w[static_cast<std::size_t>(i)] = dot(bb.projection.row(i), v);
    std::vector<double> back(2, 0.0);
    for (std::int64_t i = 0; i < bb.projection.rows(); ++i)
      for (int j = 0; j < 2; ++j)
        back[static_cast<std::size_t>(j)] +=
            bb.projection(i, j) * w[static_cast<std::size_t>(i)];
    eig = nrm2(back);
    const double inv = 1.0 / eig;
    for (double& b : back) b *= inv;
    v = back;
  }
  const double lipschitz = std::sqrt(eig);

  Rng rng(31);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> x = {rng.normal() * 3, rng.normal() * 3};
    std::vector<double> y = {rng.normal() * 3, rng.normal() * 3};
    std::vector<double> fx(cfg.feature_dim), fy(cfg.feature_dim);
    featurize(bb, x, fx);
    featurize(bb, y, fy);
    std::vector<double> dxy = {x[0] - y[0], x[1] - y[1]};
    std::vector<double> dfxy(fx.size());
    for (std::size_t i = 0; i < fx.size(); ++i) dfxy[i] = fx[i] - fy[i];
    CHECK(nrm2(dfxy) <= lipschitz * nrm2(dxy) + 1e-9);
  }
}

TEST_CASE("label noise stays in range and bad rates are rejected") {
  TaskDistributionConfig cfg;
  cfg.label_noise = 0.25;
  const TaskSpec task = sample_task(cfg, 2);
  const Episode ep = sample_episode(cfg, task, 200, 1, 3);
  for (std::int32_t label : ep.support.labels) {
    CHECK(label >= 0);
    CHECK(label < cfg.way);
  }
  cfg.label_noise = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
