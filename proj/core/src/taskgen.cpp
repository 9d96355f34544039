#include "steel/taskgen.hpp"

#include <cmath>
#include <stdexcept>

#include "steel/errors.hpp"
#include "steel/rng.hpp"

namespace steel {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

void TaskDistributionConfig::validate() const {
  if (way < 2) throw ConfigError("task config: way must be >= 2");
  if (noise_scale <= 0) throw ConfigError("task config: noise_scale must be > 0");
  if (input_dim < 2) throw ConfigError("task config: input_dim must be >= 2");
  if (feature_dim < 1) throw ConfigError("task config: feature_dim must be >= 1");
  if (!(angle_min <= angle_max)) throw ConfigError("task config: bad angle range");
  if (label_noise < 0 || label_noise >= 1)
    throw ConfigError("task config: label_noise must be in [0, 1)");
}

Backbone make_backbone(const TaskDistributionConfig& config) {
  return make_backbone(config, config.feature_dim, config.backbone_seed);
}

Backbone make_backbone(const TaskDistributionConfig& config,
                       std::int64_t feature_dim, std::uint64_t seed) {
  config.validate();
  Backbone bb;
  bb.projection = Matrix(feature_dim, config.input_dim);
  bb.bias.assign(static_cast<std::size_t>(feature_dim), 0.0);
  Rng rng(substream(seed, "taskgen/backbone"));
  for (double& v : bb.projection.storage())
    v = config.projection_scale * rng.normal();
  for (double& v : bb.bias) v = 0.1 * rng.normal();
  return bb;
}

void featurize(const Backbone& backbone, std::span<const double> raw,
               std::span<double> out) {
  if (static_cast<std::int64_t>(raw.size()) != backbone.projection.cols())
    throw std::invalid_argument("featurize: raw input dim mismatch");
  if (static_cast<std::int64_t>(out.size()) != backbone.projection.rows())
    throw std::invalid_argument("featurize: output dim mismatch");
  for (std::int64_t i = 0; i < backbone.projection.rows(); ++i)
    out[i] = std::tanh(dot(backbone.projection.row(i), raw) + backbone.bias[i]);
}

Matrix featurize_batch(const Backbone& backbone, const Matrix& raw) {
  Matrix out(raw.rows(), backbone.projection.rows());
  for (std::int64_t i = 0; i < raw.rows(); ++i)
    featurize(backbone, raw.row(i), out.row(i));
  return out;
}

TaskSpec sample_task(const TaskDistributionConfig& config, std::uint64_t seed,
                     std::int64_t id) {
  config.validate();
  Rng rng(substream(seed, "taskgen/task"));
  TaskSpec spec;
  spec.id = id;
  spec.seed = seed;
  spec.angle = rng.uniform(config.angle_min, config.angle_max);
  return spec;
}

void class_mean(const TaskDistributionConfig& config, double angle,
                std::int64_t cls, std::span<double> out) {
  const double a = angle + kTwoPi * static_cast<double>(cls) /
                               static_cast<double>(config.way);
  std::fill(out.begin(), out.end(), 0.0);
  out[0] = config.mean_radius * std::cos(a);
  out[1] = config.mean_radius * std::sin(a);
}

namespace {

LabeledSet draw_set(const TaskDistributionConfig& config,
                    const Backbone& backbone, const TaskSpec& task,
                    std::int64_t per_class, Rng& rng) {
  const std::int64_t n = per_class * config.way;
  LabeledSet set;
  set.raw = Matrix(n, config.input_dim);
  set.labels.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> mean(static_cast<std::size_t>(config.input_dim));
  std::int64_t row = 0;
  for (std::int32_t cls = 0; cls < config.way; ++cls) {
    class_mean(config, task.angle, cls, mean);
    for (std::int64_t s = 0; s < per_class; ++s, ++row) {
      auto out = set.raw.row(row);
      for (std::int64_t j = 0; j < config.input_dim; ++j)
        out[j] = mean[j] + config.noise_scale * rng.normal();
      std::int32_t label = cls;
      if (config.label_noise > 0.0 && rng.uniform() < config.label_noise) {
        // flip to a uniformly chosen other class
        auto shift = static_cast<std::int32_t>(rng.below(config.way - 1)) + 1;
        label = static_cast<std::int32_t>((cls + shift) % config.way);
      }
      set.labels[static_cast<std::size_t>(row)] = label;
    }
  }
  set.features = featurize_batch(backbone, set.raw);
  return set;
}

}  // namespace

Episode sample_episode(const TaskDistributionConfig& config,
                       const TaskSpec& task, std::int64_t shots,
                       std::int64_t query_per_class, std::uint64_t seed) {
  config.validate();
  if (shots < 1) throw std::invalid_argument("sample_episode: shots must be >= 1");
  if (query_per_class < 1)
    throw std::invalid_argument("sample_episode: query_per_class must be >= 1");

  const Backbone backbone = make_backbone(config);
  Episode ep;
  ep.task = task;
  ep.shots = shots;
  ep.way = config.way;
  ep.query_per_class = query_per_class;
  ep.seed = seed;

  Rng support_rng(substream(seed, "taskgen/support"));
  Rng query_rng(substream(seed, "taskgen/query"));
  ep.support = draw_set(config, backbone, task, shots, support_rng);
  ep.query = draw_set(config, backbone, task, query_per_class, query_rng);
  return ep;
}

}  // namespace steel
