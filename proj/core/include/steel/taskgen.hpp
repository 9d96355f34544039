#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "steel/matrix.hpp"

namespace steel {

// Synthetic task family: k class means on a circle of radius mean_radius in
// a 2-D latent space, rotated per task by an angle drawn uniformly from
// [angle_min, angle_max), with Gaussian class noise. Raw inputs are lifted
// to feature_dim dimensions by a frozen random tanh feature map.
struct TaskDistributionConfig {
  std::int64_t input_dim = 2;
  std::int64_t way = 5;  // classes per task
  double angle_min = 0.0;
  double angle_max = 6.283185307179586476925286766559;
  double mean_radius = 3.0;
  double noise_scale = 0.75;
  std::int64_t feature_dim = 8;
  std::uint64_t backbone_seed = 17;
  double projection_scale = 0.45;  // std of random projection entries
  double label_noise = 0.0;

  // Flat linear-head adapter: way x feature_dim weights plus way biases.
  std::int64_t adapter_dim() const { return way * feature_dim + way; }
  void validate() const;
};

struct TaskSpec {
  std::int64_t id = 0;
  double angle = 0.0;
  std::uint64_t seed = 0;
};

struct LabeledSet {
  Matrix raw;       // n x input_dim
  Matrix features;  // n x feature_dim
  std::vector<std::int32_t> labels;

  std::int64_t size() const { return raw.rows(); }
};

struct Episode {
  TaskSpec task;
  LabeledSet support;
  LabeledSet query;
  std::int64_t shots = 0;
  std::int64_t way = 0;
  std::int64_t query_per_class = 0;
  std::uint64_t seed = 0;
};

// Frozen feature map; identical for a given config across the whole run.
struct Backbone {
  Matrix projection;  // feature_dim x input_dim
  std::vector<double> bias;
};

Backbone make_backbone(const TaskDistributionConfig& config);
Backbone make_backbone(const TaskDistributionConfig& config,
                       std::int64_t feature_dim, std::uint64_t seed);

void featurize(const Backbone& backbone, std::span<const double> raw,
               std::span<double> out);
Matrix featurize_batch(const Backbone& backbone, const Matrix& raw);

TaskSpec sample_task(const TaskDistributionConfig& config, std::uint64_t seed,
                     std::int64_t id = 0);

Episode sample_episode(const TaskDistributionConfig& config,
                       const TaskSpec& task, std::int64_t shots,
                       std::int64_t query_per_class, std::uint64_t seed);

// Class mean in the 2-D latent plane for a given task angle.
void class_mean(const TaskDistributionConfig& config, double angle,
                std::int64_t cls, std::span<double> out);

}  // namespace steel
