#include "steel/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace steel {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

MlpNet::MlpNet(std::vector<std::int64_t> widths, std::vector<Activation> acts)
    : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("MlpNet needs >= 2 widths");
  if (acts.size() != widths_.size() - 1)
    throw std::invalid_argument("MlpNet: one activation per layer required");
  layers_.resize(widths_.size() - 1);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].w = Matrix(widths_[l + 1], widths_[l]);
    layers_[l].b.assign(static_cast<std::size_t>(widths_[l + 1]), 0.0);
    layers_[l].act = acts[l];
  }
}

MlpNet MlpNet::random(std::vector<std::int64_t> widths,
                      std::vector<Activation> acts, Rng& rng) {
  MlpNet net(std::move(widths), std::move(acts));
  for (auto& layer : net.layers_) {
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.w.cols()));
    for (double& v : layer.w.storage()) v = scale * rng.normal();
  }
  return net;
}

std::int64_t MlpNet::param_count() const {
  std::int64_t n = 0;
  for (const auto& layer : layers_)
    n += layer.w.size() + static_cast<std::int64_t>(layer.b.size());
  return n;
}

Matrix MlpNet::forward(const Matrix& x, ForwardCache* cache,
                       std::span<const Matrix* const> cond) const {
  if (x.cols() != input_dim())
    throw std::invalid_argument("MlpNet::forward input dim mismatch");
  if (!cond.empty() && cond.size() != layers_.size())
    throw std::invalid_argument("MlpNet::forward cond size mismatch");

  if (cache) {
    cache->input = x;
    cache->pre.assign(layers_.size(), Matrix());
    cache->post.assign(layers_.size(), Matrix());
  }

  Matrix cur = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const MlpLayer& layer = layers_[l];
    Matrix pre(cur.rows(), layer.w.rows());
    gemm(false, true, 1.0, cur, layer.w, 0.0, pre);
    for (std::int64_t i = 0; i < pre.rows(); ++i) {
      double* row = pre.data() + i * pre.cols();
      for (std::int64_t j = 0; j < pre.cols(); ++j) row[j] += layer.b[j];
    }
    if (!cond.empty() && cond[l] != nullptr) {
      const Matrix& extra = *cond[l];
      if (extra.cols() != pre.cols() ||
          (extra.rows() != pre.rows() && extra.rows() != 1))
        throw std::invalid_argument("MlpNet::forward cond shape mismatch");
      if (extra.rows() == pre.rows()) {
        for (std::int64_t i = 0; i < pre.size(); ++i)
          pre.data()[i] += extra.data()[i];
      } else {
        // Single conditioning row broadcasts over the batch (shared-timestep
        // sampling path).
        const double* row = extra.data();
        for (std::int64_t i = 0; i < pre.rows(); ++i) {
          double* dst = pre.data() + i * pre.cols();
          for (std::int64_t j = 0; j < pre.cols(); ++j) dst[j] += row[j];
        }
      }
    }
    Matrix post = pre;
    if (layer.act == Activation::gelu) {
      double* v = post.data();
      const std::int64_t size = post.size();
#pragma omp parallel for schedule(static) if (size > 16384)
      for (std::int64_t i = 0; i < size; ++i) v[i] = gelu(v[i]);
    }
    if (cache) {
      cache->pre[l] = pre;
      cache->post[l] = post;
    }
    cur = std::move(post);
  }
  return cur;
}

MlpNet::Grads MlpNet::backward(const ForwardCache& cache,
                               const Matrix& grad_out, bool need_cond) const {
  const std::size_t depth = layers_.size();
  Grads g;
  g.w.resize(depth);
  g.b.resize(depth);
  if (need_cond) g.cond.resize(depth);

  Matrix delta = grad_out;  // dL/d(post_l)
  for (std::size_t li = depth; li-- > 0;) {
    const MlpLayer& layer = layers_[li];
    if (layer.act == Activation::gelu) {
      const double* pre = cache.pre[li].data();
      double* d = delta.data();
      const std::int64_t size = delta.size();
#pragma omp parallel for schedule(static) if (size > 16384)
      for (std::int64_t i = 0; i < size; ++i) d[i] *= gelu_grad(pre[i]);
    }
    // delta is now dL/d(pre_l), which is also dL/d(cond_l).
    if (need_cond) g.cond[li] = delta;

    const Matrix& input = (li == 0) ? cache.input : cache.post[li - 1];
    g.w[li] = Matrix(layer.w.rows(), layer.w.cols());
    gemm(true, false, 1.0, delta, input, 0.0, g.w[li]);
    g.b[li].assign(static_cast<std::size_t>(layer.w.rows()), 0.0);
    for (std::int64_t i = 0; i < delta.rows(); ++i) {
      const double* row = delta.data() + i * delta.cols();
      for (std::int64_t j = 0; j < delta.cols(); ++j) g.b[li][j] += row[j];
    }

    Matrix prev(delta.rows(), layer.w.cols());
    gemm(false, false, 1.0, delta, layer.w, 0.0, prev);
    delta = std::move(prev);
  }
  g.input = std::move(delta);
  return g;
}

std::vector<std::span<double>> MlpNet::param_blocks() {
  std::vector<std::span<double>> blocks;
  blocks.reserve(layers_.size() * 2);
  for (auto& layer : layers_) {
    blocks.emplace_back(layer.w.storage());
    blocks.emplace_back(layer.b);
  }
  return blocks;
}

std::vector<std::span<const double>> MlpNet::param_blocks() const {
  std::vector<std::span<const double>> blocks;
  blocks.reserve(layers_.size() * 2);
  for (const auto& layer : layers_) {
    blocks.emplace_back(layer.w.storage());
    blocks.emplace_back(layer.b);
  }
  return blocks;
}

}  // namespace steel
