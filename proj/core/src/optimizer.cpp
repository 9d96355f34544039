#include "steel/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "steel/errors.hpp"
#include "steel/matrix.hpp"

namespace steel {

Optimizer::Optimizer(OptimizerConfig cfg,
                     std::span<const std::int64_t> block_sizes)
    : cfg_(cfg) {
  m_.resize(block_sizes.size());
  v_.resize(block_sizes.size());
  for (std::size_t i = 0; i < block_sizes.size(); ++i) {
    m_[i].assign(static_cast<std::size_t>(block_sizes[i]), 0.0);
    v_[i].assign(static_cast<std::size_t>(block_sizes[i]), 0.0);
  }
}

void Optimizer::step(std::span<const std::span<double>> params,
                     std::span<const std::span<const double>> grads,
                     double lr_override) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("optimizer: block count mismatch");
  const double lr = lr_override >= 0.0 ? lr_override : cfg_.lr;
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

  for (std::size_t blk = 0; blk < params.size(); ++blk) {
    auto w = params[blk];
    auto g = grads[blk];
    auto& m = m_[blk];
    auto& v = v_[blk];
    if (w.size() != m.size() || g.size() != m.size())
      throw std::invalid_argument("optimizer: block size mismatch");
    if (!all_finite(g)) throw NumericError("optimizer: non-finite gradient");

    scratch_.resize(w.size());
    double w_norm_sq = 0.0, u_norm_sq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      double u = m_hat / (std::sqrt(v_hat) + cfg_.eps);
      if (cfg_.weight_decay != 0.0) u += cfg_.weight_decay * w[i];
      scratch_[i] = u;
      w_norm_sq += w[i] * w[i];
      u_norm_sq += u * u;
    }

    double scale = lr;
    if (cfg_.kind == OptimizerKind::lamb) {
      const double w_norm = std::sqrt(w_norm_sq);
      const double u_norm = std::sqrt(u_norm_sq);
      double trust = (w_norm == 0.0 || u_norm == 0.0) ? 1.0 : w_norm / u_norm;
      trust = std::clamp(trust, 0.0, cfg_.trust_clip);
      scale *= trust;
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= scale * scratch_[i];
  }
}

void Optimizer::step(std::span<double> params, std::span<const double> grads,
                     double lr_override) {
  const std::span<double> p[] = {params};
  const std::span<const double> g[] = {grads};
  step(std::span<const std::span<double>>(p, 1),
       std::span<const std::span<const double>>(g, 1), lr_override);
}

}  // namespace steel
