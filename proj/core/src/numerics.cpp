#include "steel/numerics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "steel/errors.hpp"

namespace steel {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double onecycle_lr(std::int64_t step, std::int64_t total_steps,
                   double lr_start, double lr_max,
                   std::int64_t warmup_steps) {
  if (total_steps < 1) throw std::invalid_argument("onecycle_lr: total_steps < 1");
  if (lr_start > lr_max) throw std::invalid_argument("onecycle_lr: lr_start > lr_max");
  if (step < 0) throw std::invalid_argument("onecycle_lr: negative step");
  if (warmup_steps < 0) warmup_steps = std::max<std::int64_t>(1, total_steps / 10);
  warmup_steps = std::min(warmup_steps, total_steps);
  if (step > total_steps) {
    static bool warned = false;
    if (!warned) {
      std::fprintf(stderr, "onecycle_lr: step %lld beyond total %lld, clamping\n",
                   static_cast<long long>(step), static_cast<long long>(total_steps));
      warned = true;
    }
    step = total_steps;
  }
  if (step <= warmup_steps) {
    const double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
    return lr_start + (lr_max - lr_start) * 0.5 * (1.0 - std::cos(kPi * frac));
  }
  const double frac = static_cast<double>(step - warmup_steps) /
                      static_cast<double>(total_steps - warmup_steps);
  return lr_max * 0.5 * (1.0 + std::cos(kPi * frac));
}

void sinusoidal_embed_into(double t, std::span<double> out) {
  const std::int64_t dim = static_cast<std::int64_t>(out.size());
  if (dim <= 0 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_embed: dim must be positive even");
  if (t < 0) throw std::invalid_argument("sinusoidal_embed: t < 0");
  const std::int64_t half = dim / 2;
  for (std::int64_t i = 0; i < half; ++i) {
    const double freq =
        std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(dim));
    out[2 * i] = std::sin(t * freq);
    out[2 * i + 1] = std::cos(t * freq);
  }
}

std::vector<double> sinusoidal_embed(double t, std::int64_t dim) {
  std::vector<double> out(static_cast<std::size_t>(dim));
  sinusoidal_embed_into(t, out);
  return out;
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> x,
                  std::span<const double> analytic_grad, double h) {
  if (h <= 0) throw std::invalid_argument("grad_check: h must be positive");
  if (x.size() != analytic_grad.size())
    throw std::invalid_argument("grad_check: size mismatch");
  std::vector<double> probe(x.begin(), x.end());
  if (!std::isfinite(f(probe))) throw NumericError("grad_check: f(x) not finite");

  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double fp = f(probe);
    probe[i] = saved - h;
    const double fm = f(probe);
    probe[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic_grad[i] - numeric) /
                       std::max(1.0, std::abs(analytic_grad[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace steel
