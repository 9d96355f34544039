#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace steel {

// One-cycle schedule: cosine warmup lr_start -> lr_max over warmup_steps,
// then cosine anneal to 0 at total_steps. warmup_steps < 0 selects
// total_steps / 10. Steps beyond total_steps clamp (with a one-time warning
// on stderr).
double onecycle_lr(std::int64_t step, std::int64_t total_steps,
                   double lr_start, double lr_max,
                   std::int64_t warmup_steps = -1);

// Interleaved sin/cos embedding of a timestep with geometric frequencies
// spanning 1 down to 1/10000. dim must be even.
std::vector<double> sinusoidal_embed(double t, std::int64_t dim);
void sinusoidal_embed_into(double t, std::span<double> out);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> x,
                  std::span<const double> analytic_grad, double h = 1e-5);

}  // namespace steel
