#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "steel/matrix.hpp"
#include "steel/rng.hpp"

namespace steel {

enum class Activation { identity, gelu };

double gelu(double x);
double gelu_grad(double x);

struct MlpLayer {
  Matrix w;               // out x in
  std::vector<double> b;  // out
  Activation act = Activation::identity;
};

// Dense MLP over row batches. Layers may receive an additive conditioning
// matrix (batch x out) summed into the pre-activation; the diffusion
// denoiser injects its per-layer time projections through that hook.
class MlpNet {
 public:
  MlpNet() = default;
  MlpNet(std::vector<std::int64_t> widths, std::vector<Activation> acts);

  // He-style init: w ~ N(0, 2/fan_in), b = 0.
  static MlpNet random(std::vector<std::int64_t> widths,
                       std::vector<Activation> acts, Rng& rng);

  std::int64_t depth() const { return static_cast<std::int64_t>(layers_.size()); }
  const std::vector<std::int64_t>& widths() const { return widths_; }
  std::int64_t input_dim() const { return widths_.front(); }
  std::int64_t output_dim() const { return widths_.back(); }
  std::int64_t param_count() const;

  MlpLayer& layer(std::int64_t l) { return layers_[l]; }
  const MlpLayer& layer(std::int64_t l) const { return layers_[l]; }

  struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre;   // pre-activations per layer
    std::vector<Matrix> post;  // activations per layer
  };

  // x: batch x input_dim. cond, when nonempty, holds one nullable pointer per
  // layer to a (batch x layer_out) matrix added to the pre-activation.
  Matrix forward(const Matrix& x, ForwardCache* cache = nullptr,
                 std::span<const Matrix* const> cond = {}) const;

  struct Grads {
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;
    Matrix input;              // dL/dx
    std::vector<Matrix> cond;  // dL/dcond per layer (empty unless requested)
  };

  Grads backward(const ForwardCache& cache, const Matrix& grad_out,
                 bool need_cond = false) const;

  // Parameter blocks in a fixed order (w0, b0, w1, b1, ...) for optimizers,
  // EMA tracking, and serialization.
  std::vector<std::span<double>> param_blocks();
  std::vector<std::span<const double>> param_blocks() const;

 private:
  std::vector<std::int64_t> widths_;
  std::vector<MlpLayer> layers_;
};

}  // namespace steel
