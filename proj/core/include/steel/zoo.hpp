#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "steel/matrix.hpp"
#include "steel/optimizer.hpp"
#include "steel/taskgen.hpp"

namespace steel {

enum class Provenance : std::uint8_t { trained = 0, diffusion = 1, medoid = 2 };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(std::string_view name);

// Flat adapter: way x feature_dim linear-head weights followed by way biases.
struct AdapterVector {
  std::vector<double> values;
  std::int64_t task_id = -1;
  Provenance provenance = Provenance::trained;

  std::int64_t dim() const { return static_cast<std::int64_t>(values.size()); }
};

// Linear-head scoring.
void head_logits(std::span<const double> adapter, std::span<const double> features,
                 std::int64_t way, std::span<double> logits);
std::int32_t head_predict(std::span<const double> adapter,
                          std::span<const double> features, std::int64_t way);
void head_softmax(std::span<const double> adapter, std::span<const double> features,
                  std::int64_t way, std::span<double> probs);

struct AdapterTrainConfig {
  OptimizerConfig opt{OptimizerKind::adam, 0.1};
  std::int64_t epochs = 300;
};

// Full-batch softmax cross-entropy on the episode support, zero init,
// deterministic. Throws TrainingFailure (carrying the last finite adapter)
// if the loss leaves the finite range.
AdapterVector train_adapter(const Episode& episode,
                            const AdapterTrainConfig& config);

// Mean 0/1 error of an adapter on a labeled set.
double head_error(std::span<const double> adapter, const LabeledSet& set,
                  std::int64_t way);

struct ZooManifest {
  std::int64_t n = 0;
  std::int64_t d = 0;
  std::vector<std::int64_t> task_ids;
  std::string config_hash;
  std::uint64_t master_seed = 0;
};

struct ModelZoo {
  Matrix rows;  // n x d
  ZooManifest manifest;

  std::int64_t size() const { return rows.rows(); }
  std::int64_t dim() const { return rows.cols(); }
};

struct ZooBuildConfig {
  std::int64_t shots = 16;
  AdapterTrainConfig train;
};

// N independent tasks, one adapter per task, rows ordered by task index.
// Per-task seeds derive from the master seed, so parallel and serial builds
// match exactly.
ModelZoo build_zoo(const TaskDistributionConfig& dist, std::int64_t n_tasks,
                   const ZooBuildConfig& config, std::uint64_t master_seed);

std::string zoo_config_hash(const TaskDistributionConfig& dist,
                            const ZooBuildConfig& config);

void save_zoo(const ModelZoo& zoo, const std::string& path);
ModelZoo load_zoo(const std::string& path);

}  // namespace steel
