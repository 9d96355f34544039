#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace steel {

enum class OptimizerKind { adam, lamb };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // LAMB trust ratio is clamped to [0, trust_clip] and defined as 1 when
  // either the weight norm or the update norm is 0.
  double trust_clip = 10.0;
};

// Adam / LAMB over a fixed set of parameter blocks. A "block" is one tensor
// (weight matrix or bias vector); LAMB computes its trust ratio per block.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig cfg, std::span<const std::int64_t> block_sizes);

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  // One update over all blocks. lr_override < 0 means "use cfg.lr".
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads,
            double lr_override = -1.0);

  // Single-block convenience.
  void step(std::span<double> params, std::span<const double> grads,
            double lr_override = -1.0);

 private:
  OptimizerConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::vector<double> scratch_;
};

}  // namespace steel
