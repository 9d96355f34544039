#include "steel/zoo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "steel/errors.hpp"
#include "steel/hash.hpp"
#include "steel/rng.hpp"

namespace steel {

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::trained: return "zoo";
    case Provenance::diffusion: return "diffusion";
    case Provenance::medoid: return "medoid";
  }
  return "unknown";
}

Provenance provenance_from_name(std::string_view name) {
  if (name == "zoo") return Provenance::trained;
  if (name == "diffusion") return Provenance::diffusion;
  if (name == "medoid") return Provenance::medoid;
  throw FormatError("unknown provenance: " + std::string(name));
}

void head_logits(std::span<const double> adapter,
                 std::span<const double> features, std::int64_t way,
                 std::span<double> logits) {
  const auto d_feat = static_cast<std::int64_t>(features.size());
  if (static_cast<std::int64_t>(adapter.size()) != way * d_feat + way)
    throw std::invalid_argument("adapter dim does not match way*d_feat+way");
  const double* bias = adapter.data() + way * d_feat;
  for (std::int64_t c = 0; c < way; ++c)
    logits[c] = dot(adapter.subspan(c * d_feat, d_feat), features) + bias[c];
}

std::int32_t head_predict(std::span<const double> adapter,
                          std::span<const double> features, std::int64_t way) {
  std::vector<double> logits(static_cast<std::size_t>(way));
  head_logits(adapter, features, way, logits);
  std::int32_t best = 0;
  for (std::int64_t c = 1; c < way; ++c)
    if (logits[c] > logits[best]) best = static_cast<std::int32_t>(c);
  return best;
}

void head_softmax(std::span<const double> adapter,
                  std::span<const double> features, std::int64_t way,
                  std::span<double> probs) {
  head_logits(adapter, features, way, probs);
  double max_logit = probs[0];
  for (std::int64_t c = 1; c < way; ++c) max_logit = std::max(max_logit, probs[c]);
  double total = 0.0;
  for (std::int64_t c = 0; c < way; ++c) {
    probs[c] = std::exp(probs[c] - max_logit);
    total += probs[c];
  }
  for (std::int64_t c = 0; c < way; ++c) probs[c] /= total;
}

double head_error(std::span<const double> adapter, const LabeledSet& set,
                  std::int64_t way) {
  if (set.size() == 0) throw std::invalid_argument("head_error: empty set");
  std::int64_t wrong = 0;
  for (std::int64_t i = 0; i < set.size(); ++i)
    if (head_predict(adapter, set.features.row(i), way) != set.labels[i])
      ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(set.size());
}

AdapterVector train_adapter(const Episode& episode,
                            const AdapterTrainConfig& config) {
  const LabeledSet& support = episode.support;
  if (support.size() == 0)
    throw std::invalid_argument("train_adapter: empty support");
  const std::int64_t way = episode.way;
  const std::int64_t d_feat = support.features.cols();
  const std::int64_t dim = way * d_feat + way;
  const std::int64_t n = support.size();

  AdapterVector adapter;
  adapter.task_id = episode.task.id;
  adapter.provenance = Provenance::trained;
  adapter.values.assign(static_cast<std::size_t>(dim), 0.0);

  if (config.epochs == 0) return adapter;

  Optimizer opt(config.opt, std::array<std::int64_t, 1>{dim});
  std::vector<double> grad(static_cast<std::size_t>(dim));
  std::vector<double> probs(static_cast<std::size_t>(way));
  std::vector<double> last_finite = adapter.values;

  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const auto x = support.features.row(i);
      head_softmax(adapter.values, x, way, probs);
      const std::int32_t y = support.labels[i];
      loss -= std::log(std::max(probs[y], 1e-300));
      for (std::int64_t c = 0; c < way; ++c) {
        const double delta = probs[c] - (c == y ? 1.0 : 0.0);
        axpy(delta, x, std::span<double>(grad).subspan(c * d_feat, d_feat));
        grad[way * d_feat + c] += delta;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& g : grad) g *= inv_n;
    loss *= inv_n;
    if (!std::isfinite(loss) || !all_finite(grad))
      throw TrainingFailure("train_adapter: loss diverged", last_finite);
    opt.step(adapter.values, grad);
    if (all_finite(adapter.values)) last_finite = adapter.values;
  }
  if (!all_finite(adapter.values))
    throw TrainingFailure("train_adapter: parameters diverged", last_finite);
  return adapter;
}

std::string zoo_config_hash(const TaskDistributionConfig& dist,
                            const ZooBuildConfig& config) {
  ByteHasher h;
  h.update_u64(static_cast<std::uint64_t>(dist.input_dim));
  h.update_u64(static_cast<std::uint64_t>(dist.way));
  const double doubles[] = {dist.angle_min,  dist.angle_max,
                            dist.mean_radius, dist.noise_scale,
                            dist.projection_scale, dist.label_noise};
  h.update(std::span<const double>(doubles));
  h.update_u64(static_cast<std::uint64_t>(dist.feature_dim));
  h.update_u64(dist.backbone_seed);
  h.update_u64(static_cast<std::uint64_t>(config.shots));
  h.update_u64(static_cast<std::uint64_t>(config.train.epochs));
  h.update_u64(static_cast<std::uint64_t>(config.train.opt.kind));
  const double opt_doubles[] = {config.train.opt.lr, config.train.opt.beta1,
                                config.train.opt.beta2, config.train.opt.eps,
                                config.train.opt.weight_decay};
  h.update(std::span<const double>(opt_doubles));
  return h.hex();
}

ModelZoo build_zoo(const TaskDistributionConfig& dist, std::int64_t n_tasks,
                   const ZooBuildConfig& config, std::uint64_t master_seed) {
  if (n_tasks < 1) throw std::invalid_argument("build_zoo: need N >= 1");
  dist.validate();

  ModelZoo zoo;
  zoo.rows = Matrix(n_tasks, dist.adapter_dim());
  zoo.manifest.n = n_tasks;
  zoo.manifest.d = dist.adapter_dim();
  zoo.manifest.task_ids.resize(static_cast<std::size_t>(n_tasks));
  zoo.manifest.config_hash = zoo_config_hash(dist, config);
  zoo.manifest.master_seed = master_seed;

  std::exception_ptr failure;
  std::int64_t failed_task = -1;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n_tasks; ++i) {
    try {
      const std::uint64_t task_seed = substream(master_seed, "zoo/task", i);
      const TaskSpec task = sample_task(dist, task_seed, i);
      const std::uint64_t ep_seed = substream(master_seed, "zoo/episode", i);
      const Episode ep = sample_episode(dist, task, config.shots, 1, ep_seed);
      const AdapterVector adapter = train_adapter(ep, config.train);
      std::copy(adapter.values.begin(), adapter.values.end(),
                zoo.rows.row(i).begin());
      zoo.manifest.task_ids[static_cast<std::size_t>(i)] = i;
    } catch (...) {
#pragma omp critical
      {
        if (!failure) {
          failure = std::current_exception();
          failed_task = i;
        }
      }
    }
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      throw TrainingFailure("build_zoo: task " + std::to_string(failed_task) +
                                " failed: " + e.what(),
                            {});
    }
  }
  return zoo;
}

}  // namespace steel
