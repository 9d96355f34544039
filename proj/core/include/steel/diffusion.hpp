#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "steel/errors.hpp"
#include "steel/matrix.hpp"
#include "steel/mlp.hpp"
#include "steel/optimizer.hpp"
#include "steel/zoo.hpp"

namespace steel {

// Linear beta schedule over T timesteps; alpha_bar via log-space cumulative
// product. alpha_bar[0] = 1 by convention, alpha_bar[t] for t in 1..T.
struct NoiseSchedule {
  std::int64_t timesteps = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> beta;       // beta[t-1] for t in 1..T
  std::vector<double> alpha_bar;  // size T+1

  double alpha(std::int64_t t) const { return 1.0 - beta[t - 1]; }
};

NoiseSchedule make_schedule(std::int64_t timesteps, double beta_min,
                            double beta_max);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
void q_sample(std::span<const double> x0, std::int64_t t,
              std::span<const double> eps, const NoiseSchedule& schedule,
              std::span<double> out);

struct DenoiserConfig {
  std::int64_t dim = 0;
  // Hidden width is 4*dim, rounded to the nearest multiple of 512 (minimum
  // 512) when rounding is enabled.
  bool round_hidden_to_512 = true;
  std::int64_t hidden_override = 0;  // > 0 bypasses the derivation
  std::int64_t hidden_layers = 3;
  std::int64_t time_expansion = 4;

  std::int64_t hidden_dim() const;
  void validate() const;
};

// Epsilon-prediction MLP: three hidden layers over x_t where each hidden
// pre-activation receives its own linear projection of a shared time
// embedding (sinusoidal embed -> two-layer net with 4x expansion).
class Denoiser {
 public:
  Denoiser() = default;
  explicit Denoiser(const DenoiserConfig& config);  // zero weights
  static Denoiser random(const DenoiserConfig& config, Rng& rng);

  const DenoiserConfig& config() const { return cfg_; }
  std::int64_t param_count() const;

  struct Cache {
    Matrix embed;  // batch x hidden
    MlpNet::ForwardCache time_cache;
    Matrix tau;                  // time-net output, batch x hidden
    std::array<Matrix, 3> cond;  // per-hidden-layer time contributions
    MlpNet::ForwardCache trunk_cache;
  };

  // Per-row timesteps (training path).
  Matrix forward(const Matrix& x_t, std::span<const std::int32_t> t,
                 Cache* cache = nullptr) const;
  // All rows share one timestep (sampling path); the time path is computed
  // once and broadcast.
  Matrix forward_shared_t(const Matrix& x_t, std::int64_t t) const;
  // Single-vector convenience.
  std::vector<double> forward_one(std::span<const double> x_t,
                                  std::int64_t t) const;

  struct Grads {
    MlpNet::Grads trunk;
    MlpNet::Grads time;
    std::array<Matrix, 3> proj;
  };
  Grads backward(const Cache& cache, const Matrix& grad_out) const;

  // Fixed block order: trunk (w,b per layer), time net (w,b per layer),
  // then the three time projections.
  std::vector<std::span<double>> param_blocks();
  std::vector<std::span<const double>> param_blocks() const;
  std::vector<std::int64_t> block_sizes() const;

  MlpNet& trunk() { return trunk_; }
  MlpNet& time_net() { return time_net_; }
  Matrix& time_proj(std::int64_t l) { return proj_[static_cast<std::size_t>(l)]; }
  const Matrix& time_proj(std::int64_t l) const {
    return proj_[static_cast<std::size_t>(l)];
  }

 private:
  DenoiserConfig cfg_;
  MlpNet trunk_;     // d -> h -> h -> h -> d
  MlpNet time_net_;  // h -> 4h -> h
  std::array<Matrix, 3> proj_;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std_dev;  // floored at 1e-6
};

NormStats compute_norm_stats(const Matrix& rows);
Matrix normalize_rows(const Matrix& rows, const NormStats& stats);
void denormalize_row(std::span<double> row, const NormStats& stats);

enum class SamplerVariance { beta, beta_tilde };

struct DiffusionTrainConfig {
  std::int64_t timesteps = 1000;
  double beta_min = 1e-4;
  double beta_max = 2e-2;
  std::int64_t epochs = 3000;
  std::int64_t stage2_epochs = 0;  // one-cycle stage; 1000 is the usual pick
  double stage2_lr_start = 4e-4;
  double stage2_lr_max = 1e-3;
  std::int64_t stage2_warmup = -1;  // -1: a tenth of the stage-2 steps
  std::int64_t batch_size = 1024;
  OptimizerConfig opt{OptimizerKind::lamb, 0.01, 0.9, 0.999, 1e-6};
  double grad_clip_norm = 1.0;  // global-norm clip; 0 disables
  double ema_decay = 0.9999;
  SamplerVariance sampler_variance = SamplerVariance::beta;
  DenoiserConfig denoiser;  // dim filled from the zoo
  std::uint64_t seed = 0;
};

struct DiffusionMetadata {
  std::int64_t epochs = 0;
  std::int64_t stage2_epochs = 0;
  std::int64_t batch_size = 0;
  std::string optimizer;
  double lr = 0.0;
  double ema_decay = 0.0;
  std::uint64_t seed = 0;
  double loss_first_tenth = 0.0;
  double loss_last_tenth = 0.0;
  double final_loss = 0.0;
  std::string zoo_hash;
};

struct DiffusionCheckpoint {
  DenoiserConfig config;
  NoiseSchedule schedule;
  NormStats stats;
  Denoiser net;  // raw weights
  Denoiser ema;  // sampling weights
  SamplerVariance sampler_variance = SamplerVariance::beta;
  DiffusionMetadata metadata;
};

// Thrown when the training loss leaves the finite range; carries the last
// finite checkpoint.
class DiffusionDivergence : public NumericError {
 public:
  DiffusionDivergence(const std::string& what,
                      std::shared_ptr<DiffusionCheckpoint> last)
      : NumericError(what), last_(std::move(last)) {}
  const std::shared_ptr<DiffusionCheckpoint>& last_finite() const { return last_; }

 private:
  std::shared_ptr<DiffusionCheckpoint> last_;
};

DiffusionCheckpoint train_diffusion(const ModelZoo& zoo,
                                    const DiffusionTrainConfig& config);

// M ancestral samples from the EMA weights, de-normalized to adapter space.
// Per-sample counter-based noise streams keep the result independent of
// batching and safe to fan out.
Matrix sample_parameters(const DiffusionCheckpoint& checkpoint, std::int64_t m,
                         std::uint64_t seed);

// Generic ancestral loop used both by sample_parameters and by oracle tests
// that plug in an analytic denoiser.
using DenoiseFn =
    std::function<void(const Matrix& x_t, std::int64_t t, Matrix& eps_hat)>;
Matrix ancestral_sample(const DenoiseFn& denoise, const NoiseSchedule& schedule,
                        std::int64_t m, std::int64_t dim, std::uint64_t seed,
                        SamplerVariance variance = SamplerVariance::beta);

// Held-out denoising loss (per-element MSE) of the net and of the
// closed-form optimum for standard-normal data, on paired draws.
struct DenoiseEval {
  double model_mse = 0.0;
  double gaussian_optimum_mse = 0.0;
};
DenoiseEval evaluate_denoiser(const Denoiser& net, const NoiseSchedule& schedule,
                              const Matrix& x0, std::uint64_t seed,
                              std::int64_t repeats = 1);

}  // namespace steel
