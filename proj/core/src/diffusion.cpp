#include "steel/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "steel/numerics.hpp"
#include "steel/rng.hpp"

namespace steel {

NoiseSchedule make_schedule(std::int64_t timesteps, double beta_min,
                            double beta_max) {
  if (timesteps < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw std::invalid_argument("schedule: need 0 < beta_min < beta_max < 1");

  NoiseSchedule s;
  s.timesteps = timesteps;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.beta.resize(static_cast<std::size_t>(timesteps));
  s.alpha_bar.resize(static_cast<std::size_t>(timesteps) + 1);
  s.alpha_bar[0] = 1.0;
  double log_acc = 0.0;
  for (std::int64_t t = 1; t <= timesteps; ++t) {
    const double frac = timesteps == 1
                            ? 0.0
                            : static_cast<double>(t - 1) /
                                  static_cast<double>(timesteps - 1);
    const double beta = beta_min + frac * (beta_max - beta_min);
    s.beta[t - 1] = beta;
    log_acc += std::log1p(-beta);
    s.alpha_bar[t] = std::exp(log_acc);
  }
  return s;
}

void q_sample(std::span<const double> x0, std::int64_t t,
              std::span<const double> eps, const NoiseSchedule& schedule,
              std::span<double> out) {
  if (t < 1 || t > schedule.timesteps)
    throw std::invalid_argument("q_sample: t out of range");
  if (x0.size() != eps.size() || x0.size() != out.size())
    throw std::invalid_argument("q_sample: dim mismatch");
  const double ab = schedule.alpha_bar[t];
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  for (std::size_t i = 0; i < x0.size(); ++i)
    out[i] = signal * x0[i] + noise * eps[i];
}

std::int64_t DenoiserConfig::hidden_dim() const {
  if (hidden_override > 0) return hidden_override;
  const std::int64_t base = 4 * dim;
  if (!round_hidden_to_512) return base;
  std::int64_t rounded = (base + 256) / 512 * 512;
  rounded = std::max<std::int64_t>(rounded, 512);
  return std::max(rounded, dim);
}

void DenoiserConfig::validate() const {
  if (dim < 1) throw std::invalid_argument("denoiser: dim must be >= 1");
  if (hidden_layers != 3)
    throw std::invalid_argument("denoiser: exactly 3 hidden layers supported");
  const std::int64_t h = hidden_dim();
  if (h < dim) throw std::invalid_argument("denoiser: hidden < dim");
  if (h % 2 != 0)
    throw std::invalid_argument("denoiser: hidden dim must be even");
  if (round_hidden_to_512 && hidden_override == 0 && h % 512 != 0)
    throw std::invalid_argument("denoiser: hidden not a multiple of 512");
}

Denoiser::Denoiser(const DenoiserConfig& config) : cfg_(config) {
  cfg_.validate();
  const std::int64_t d = cfg_.dim;
  const std::int64_t h = cfg_.hidden_dim();
  trunk_ = MlpNet({d, h, h, h, d}, {Activation::gelu, Activation::gelu,
                                    Activation::gelu, Activation::identity});
  time_net_ = MlpNet({h, cfg_.time_expansion * h, h},
                     {Activation::gelu, Activation::identity});
  for (auto& p : proj_) p = Matrix(h, h);
}

Denoiser Denoiser::random(const DenoiserConfig& config, Rng& rng) {
  Denoiser net(config);
  const std::int64_t h = config.hidden_dim();
  auto init = [&rng](MlpNet& mlp) {
    for (std::int64_t l = 0; l < mlp.depth(); ++l) {
      auto& layer = mlp.layer(l);
      const double scale = std::sqrt(2.0 / static_cast<double>(layer.w.cols()));
      for (double& v : layer.w.storage()) v = scale * rng.normal();
    }
  };
  init(net.trunk_);
  init(net.time_net_);
  const double pscale = std::sqrt(1.0 / static_cast<double>(h));
  for (auto& p : net.proj_)
    for (double& v : p.storage()) v = pscale * rng.normal();
  return net;
}

std::int64_t Denoiser::param_count() const {
  std::int64_t n = trunk_.param_count() + time_net_.param_count();
  for (const auto& p : proj_) n += p.size();
  return n;
}

Matrix Denoiser::forward(const Matrix& x_t, std::span<const std::int32_t> t,
                         Cache* cache) const {
  const std::int64_t batch = x_t.rows();
  if (static_cast<std::int64_t>(t.size()) != batch)
    throw std::invalid_argument("denoiser: one timestep per row required");
  const std::int64_t h = cfg_.hidden_dim();

  Matrix embed(batch, h);
  for (std::int64_t i = 0; i < batch; ++i)
    sinusoidal_embed_into(static_cast<double>(t[i]), embed.row(i));

  Cache local;
  Cache& c = cache ? *cache : local;
  c.embed = embed;
  c.tau = time_net_.forward(embed, cache ? &c.time_cache : nullptr);
  for (std::size_t l = 0; l < proj_.size(); ++l) {
    c.cond[l] = Matrix(batch, h);
    gemm(false, true, 1.0, c.tau, proj_[l], 0.0, c.cond[l]);
  }
  const Matrix* cond[4] = {&c.cond[0], &c.cond[1], &c.cond[2], nullptr};
  return trunk_.forward(x_t, cache ? &c.trunk_cache : nullptr,
                        std::span<const Matrix* const>(cond, 4));
}

Matrix Denoiser::forward_shared_t(const Matrix& x_t, std::int64_t t) const {
  const std::int64_t h = cfg_.hidden_dim();
  Matrix embed(1, h);
  sinusoidal_embed_into(static_cast<double>(t), embed.row(0));
  const Matrix tau = time_net_.forward(embed);
  std::array<Matrix, 3> cond_rows;
  for (std::size_t l = 0; l < proj_.size(); ++l) {
    cond_rows[l] = Matrix(1, h);
    gemm(false, true, 1.0, tau, proj_[l], 0.0, cond_rows[l]);
  }
  const Matrix* cond[4] = {&cond_rows[0], &cond_rows[1], &cond_rows[2], nullptr};
  return trunk_.forward(x_t, nullptr, std::span<const Matrix* const>(cond, 4));
}

std::vector<double> Denoiser::forward_one(std::span<const double> x_t,
                                          std::int64_t t) const {
  if (t < 1) throw std::invalid_argument("denoiser: t out of range");
  Matrix x(1, static_cast<std::int64_t>(x_t.size()));
  std::copy(x_t.begin(), x_t.end(), x.storage().begin());
  const Matrix out = forward_shared_t(x, t);
  return {out.storage().begin(), out.storage().end()};
}

Denoiser::Grads Denoiser::backward(const Cache& cache,
                                   const Matrix& grad_out) const {
  Grads g;
  g.trunk = trunk_.backward(cache.trunk_cache, grad_out, /*need_cond=*/true);

  const std::int64_t batch = cache.tau.rows();
  const std::int64_t h = cfg_.hidden_dim();
  Matrix d_tau(batch, h);
  for (std::size_t l = 0; l < proj_.size(); ++l) {
    g.proj[l] = Matrix(h, h);
    gemm(true, false, 1.0, g.trunk.cond[l], cache.tau, 0.0, g.proj[l]);
    gemm(false, false, 1.0, g.trunk.cond[l], proj_[l], l == 0 ? 0.0 : 1.0,
         d_tau);
  }
  g.time = time_net_.backward(cache.time_cache, d_tau);
  return g;
}

std::vector<std::span<double>> Denoiser::param_blocks() {
  std::vector<std::span<double>> blocks = trunk_.param_blocks();
  for (auto b : time_net_.param_blocks()) blocks.push_back(b);
  for (auto& p : proj_) blocks.emplace_back(p.storage());
  return blocks;
}

std::vector<std::span<const double>> Denoiser::param_blocks() const {
  std::vector<std::span<const double>> blocks =
      static_cast<const MlpNet&>(trunk_).param_blocks();
  for (auto b : time_net_.param_blocks()) blocks.push_back(b);
  for (const auto& p : proj_) blocks.emplace_back(p.storage());
  return blocks;
}

std::vector<std::int64_t> Denoiser::block_sizes() const {
  std::vector<std::int64_t> sizes;
  for (auto b : param_blocks()) sizes.push_back(static_cast<std::int64_t>(b.size()));
  return sizes;
}

NormStats compute_norm_stats(const Matrix& rows) {
  const std::int64_t n = rows.rows();
  const std::int64_t d = rows.cols();
  NormStats stats;
  stats.mean.assign(static_cast<std::size_t>(d), 0.0);
  stats.std_dev.assign(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    axpy(1.0, rows.row(i), stats.mean);
  for (double& m : stats.mean) m /= static_cast<double>(n);
  double max_raw_std = 0.0;
  for (std::int64_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double delta = rows(i, j) - stats.mean[j];
      acc += delta * delta;
    }
    const double raw = std::sqrt(acc / static_cast<double>(n));
    max_raw_std = std::max(max_raw_std, raw);
    stats.std_dev[j] = std::max(raw, 1e-6);
  }
  if (max_raw_std == 0.0)
    throw NumericError("degenerate zoo: all dimensions constant");
  return stats;
}

Matrix normalize_rows(const Matrix& rows, const NormStats& stats) {
  Matrix out = rows;
  for (std::int64_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::int64_t j = 0; j < out.cols(); ++j)
      row[j] = (row[j] - stats.mean[j]) / stats.std_dev[j];
  }
  return out;
}

void denormalize_row(std::span<double> row, const NormStats& stats) {
  for (std::size_t j = 0; j < row.size(); ++j)
    row[j] = row[j] * stats.std_dev[j] + stats.mean[j];
}

namespace {

void accumulate_grads(const Denoiser::Grads& g,
                      std::vector<std::vector<double>>& flat) {
  std::size_t idx = 0;
  auto push = [&](std::span<const double> block) {
    flat[idx].assign(block.begin(), block.end());
    ++idx;
  };
  for (std::size_t l = 0; l < g.trunk.w.size(); ++l) {
    push(g.trunk.w[l].storage());
    push(g.trunk.b[l]);
  }
  for (std::size_t l = 0; l < g.time.w.size(); ++l) {
    push(g.time.w[l].storage());
    push(g.time.b[l]);
  }
  for (const auto& p : g.proj) push(p.storage());
}

}  // namespace

DiffusionCheckpoint train_diffusion(const ModelZoo& zoo,
                                    const DiffusionTrainConfig& config) {
  if (zoo.size() < 2)
    throw std::invalid_argument("train_diffusion: zoo must have >= 2 rows");

  DiffusionCheckpoint ckpt;
  ckpt.config = config.denoiser;
  ckpt.config.dim = zoo.dim();
  ckpt.config.validate();
  ckpt.schedule = make_schedule(config.timesteps, config.beta_min, config.beta_max);
  ckpt.stats = compute_norm_stats(zoo.rows);
  ckpt.sampler_variance = config.sampler_variance;

  const Matrix data = normalize_rows(zoo.rows, ckpt.stats);
  const std::int64_t n = data.rows();
  const std::int64_t d = data.cols();
  const std::int64_t batch_size = std::min<std::int64_t>(config.batch_size, n);
  const std::int64_t total_epochs = config.epochs + config.stage2_epochs;
  if (config.epochs < 1)
    throw std::invalid_argument("train_diffusion: epochs must be >= 1");

  Rng init_rng(substream(config.seed, "diffusion/init"));
  ckpt.net = Denoiser::random(ckpt.config, init_rng);
  ckpt.ema = ckpt.net;

  Optimizer opt(config.opt, ckpt.net.block_sizes());
  auto params = ckpt.net.param_blocks();
  auto ema_params = ckpt.ema.param_blocks();
  std::vector<std::vector<double>> grad_store(params.size());
  std::vector<std::span<const double>> grad_spans(params.size());

  Rng data_rng(substream(config.seed, "diffusion/data"));
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> epoch_losses;
  epoch_losses.reserve(static_cast<std::size_t>(total_epochs));
  const std::int64_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  const std::int64_t stage2_total = config.stage2_epochs * steps_per_epoch;
  std::int64_t stage2_step = 0;

  auto snapshot = std::make_shared<DiffusionCheckpoint>();
  auto take_snapshot = [&]() { *snapshot = ckpt; };
  take_snapshot();

  for (std::int64_t epoch = 0; epoch < total_epochs; ++epoch) {
    data_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::int64_t batches = 0;
    for (std::int64_t start = 0; start < n; start += batch_size) {
      const std::int64_t b = std::min(batch_size, n - start);
      Matrix x0(b, d);
      Matrix eps(b, d);
      Matrix x_t(b, d);
      std::vector<std::int32_t> ts(static_cast<std::size_t>(b));
      for (std::int64_t i = 0; i < b; ++i) {
        const auto src = data.row(order[static_cast<std::size_t>(start + i)]);
        std::copy(src.begin(), src.end(), x0.row(i).begin());
        ts[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(
            1 + data_rng.below(static_cast<std::uint64_t>(ckpt.schedule.timesteps)));
        for (double& v : eps.row(i)) v = data_rng.normal();
        q_sample(x0.row(i), ts[static_cast<std::size_t>(i)], eps.row(i),
                 ckpt.schedule, x_t.row(i));
      }

      Denoiser::Cache cache;
      Matrix out = ckpt.net.forward(x_t, ts, &cache);
      const double inv = 1.0 / static_cast<double>(b * d);
      double loss = 0.0;
      for (std::int64_t i = 0; i < out.size(); ++i) {
        const double diff = out.data()[i] - eps.data()[i];
        loss += diff * diff;
        out.data()[i] = 2.0 * inv * diff;  // reuse as dL/dout
      }
      loss *= inv;
      if (!std::isfinite(loss))
        throw DiffusionDivergence(
            "train_diffusion: non-finite loss at epoch " + std::to_string(epoch),
            snapshot);

      const Denoiser::Grads grads = ckpt.net.backward(cache, out);
      accumulate_grads(grads, grad_store);
      if (config.grad_clip_norm > 0.0) {
        double norm_sq = 0.0;
        for (const auto& block : grad_store)
          for (double g : block) norm_sq += g * g;
        const double norm = std::sqrt(norm_sq);
        if (norm > config.grad_clip_norm) {
          const double scale = config.grad_clip_norm / norm;
          for (auto& block : grad_store)
            for (double& g : block) g *= scale;
        }
      }
      for (std::size_t i = 0; i < grad_store.size(); ++i)
        grad_spans[i] = grad_store[i];

      double lr_override = -1.0;
      if (epoch >= config.epochs) {
        lr_override = onecycle_lr(stage2_step, stage2_total,
                                  config.stage2_lr_start, config.stage2_lr_max,
                                  config.stage2_warmup);
        ++stage2_step;
      }
      opt.step(params, grad_spans, lr_override);

      // Warmed-up decay (the usual num_updates ramp): the EMA tracks the
      // net early and settles at the configured rate.
      const double step_count = static_cast<double>(opt.step_count());
      const double decay = std::min(config.ema_decay,
                                    (1.0 + step_count) / (10.0 + step_count));
      for (std::size_t blk = 0; blk < params.size(); ++blk) {
        auto w = params[blk];
        auto e = ema_params[blk];
        for (std::size_t i = 0; i < w.size(); ++i)
          e[i] = decay * e[i] + (1.0 - decay) * w[i];
      }

      epoch_loss += loss;
      ++batches;
    }
    epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    if (epoch % 64 == 0) take_snapshot();
  }

  const auto tenth = std::max<std::size_t>(1, epoch_losses.size() / 10);
  const double first =
      std::accumulate(epoch_losses.begin(), epoch_losses.begin() + tenth, 0.0) /
      static_cast<double>(tenth);
  const double last =
      std::accumulate(epoch_losses.end() - tenth, epoch_losses.end(), 0.0) /
      static_cast<double>(tenth);

  ckpt.metadata.epochs = config.epochs;
  ckpt.metadata.stage2_epochs = config.stage2_epochs;
  ckpt.metadata.batch_size = batch_size;
  ckpt.metadata.optimizer =
      config.opt.kind == OptimizerKind::lamb ? "lamb" : "adam";
  ckpt.metadata.lr = config.opt.lr;
  ckpt.metadata.ema_decay = config.ema_decay;
  ckpt.metadata.seed = config.seed;
  ckpt.metadata.loss_first_tenth = first;
  ckpt.metadata.loss_last_tenth = last;
  ckpt.metadata.final_loss = epoch_losses.back();
  return ckpt;
}

Matrix ancestral_sample(const DenoiseFn& denoise, const NoiseSchedule& schedule,
                        std::int64_t m, std::int64_t dim, std::uint64_t seed,
                        SamplerVariance variance) {
  if (m < 1) throw std::invalid_argument("ancestral_sample: m must be >= 1");
  const std::int64_t timesteps = schedule.timesteps;
  Matrix out(m, dim);

  const std::int64_t chunk = std::min<std::int64_t>(m, 1024);
  Matrix eps_hat;
  for (std::int64_t base = 0; base < m; base += chunk) {
    const std::int64_t b = std::min(chunk, m - base);
    std::vector<CounterRng> streams;
    streams.reserve(static_cast<std::size_t>(b));
    for (std::int64_t i = 0; i < b; ++i)
      streams.emplace_back(substream(seed, "diffusion/sample", base + i));

    Matrix x(b, dim);
    for (std::int64_t i = 0; i < b; ++i)
      for (double& v : x.row(i)) v = streams[static_cast<std::size_t>(i)].normal();

    for (std::int64_t t = timesteps; t >= 1; --t) {
      eps_hat = Matrix(b, dim);
      denoise(x, t, eps_hat);
      const double beta = schedule.beta[t - 1];
      const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
      const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar[t]);
      double sigma = 0.0;
      if (t > 1) {
        if (variance == SamplerVariance::beta) {
          sigma = std::sqrt(beta);
        } else {
          sigma = std::sqrt((1.0 - schedule.alpha_bar[t - 1]) /
                            (1.0 - schedule.alpha_bar[t]) * beta);
        }
      }
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < b; ++i) {
        auto row = x.row(i);
        const auto eh = eps_hat.row(i);
        auto& stream = streams[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < dim; ++j) {
          double mean = inv_sqrt_alpha * (row[j] - coef * eh[j]);
          row[j] = (t > 1) ? mean + sigma * stream.normal() : mean;
        }
      }
    }
    for (std::int64_t i = 0; i < b; ++i)
      std::copy(x.row(i).begin(), x.row(i).end(), out.row(base + i).begin());
  }
  return out;
}

Matrix sample_parameters(const DiffusionCheckpoint& checkpoint, std::int64_t m,
                         std::uint64_t seed) {
  const Denoiser& net = checkpoint.ema;
  DenoiseFn fn = [&net](const Matrix& x, std::int64_t t, Matrix& eps_hat) {
    eps_hat = net.forward_shared_t(x, t);
  };
  Matrix samples = ancestral_sample(fn, checkpoint.schedule, m,
                                    checkpoint.config.dim, seed,
                                    checkpoint.sampler_variance);
  for (std::int64_t i = 0; i < samples.rows(); ++i)
    denormalize_row(samples.row(i), checkpoint.stats);
  return samples;
}

DenoiseEval evaluate_denoiser(const Denoiser& net, const NoiseSchedule& schedule,
                              const Matrix& x0, std::uint64_t seed,
                              std::int64_t repeats) {
  const std::int64_t n = x0.rows();
  const std::int64_t d = x0.cols();
  Rng rng(substream(seed, "diffusion/eval"));
  DenoiseEval eval;
  double count = 0.0;
  for (std::int64_t rep = 0; rep < repeats; ++rep) {
    Matrix eps(n, d);
    Matrix x_t(n, d);
    std::vector<std::int32_t> ts(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      ts[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(
          1 + rng.below(static_cast<std::uint64_t>(schedule.timesteps)));
      for (double& v : eps.row(i)) v = rng.normal();
      q_sample(x0.row(i), ts[static_cast<std::size_t>(i)], eps.row(i), schedule,
               x_t.row(i));
    }
    const Matrix out = net.forward(x_t, ts);
    for (std::int64_t i = 0; i < n; ++i) {
      const double opt_coef =
          std::sqrt(1.0 - schedule.alpha_bar[ts[static_cast<std::size_t>(i)]]);
      for (std::int64_t j = 0; j < d; ++j) {
        const double diff = out(i, j) - eps(i, j);
        eval.model_mse += diff * diff;
        const double opt_diff = opt_coef * x_t(i, j) - eps(i, j);
        eval.gaussian_optimum_mse += opt_diff * opt_diff;
      }
    }
    count += static_cast<double>(n * d);
  }
  eval.model_mse /= count;
  eval.gaussian_optimum_mse /= count;
  return eval;
}

}  // namespace steel
