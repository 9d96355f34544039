#include "steel/bounds.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "steel/clustering.hpp"
#include "steel/errors.hpp"
#include "steel/optimizer.hpp"
#include "steel/rng.hpp"
#include "steel/serialize.hpp"
#include "steel/zoo.hpp"

namespace steel {

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::zero_one: return "zero_one";
    case LossKind::bounded_ordinal: return "bounded_ordinal";
  }
  return "unknown";
}

LossKind loss_from_name(std::string_view name) {
  if (name == "zero_one") return LossKind::zero_one;
  if (name == "bounded_ordinal") return LossKind::bounded_ordinal;
  throw ConfigError("unknown loss: " + std::string(name));
}

double loss_max(LossKind) { return 1.0; }

double zero_one_loss(std::int32_t prediction, std::int32_t label) {
  return prediction == label ? 0.0 : 1.0;
}

double bounded_ordinal_loss(std::span<const double> label_onehot,
                            std::span<const double> probs) {
  if (label_onehot.size() != probs.size())
    throw std::invalid_argument("bounded_ordinal_loss: size mismatch");
  double sum = 0.0;
  for (double p : probs) {
    if (p < -1e-12) throw std::invalid_argument("bounded_ordinal_loss: negative prob");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("bounded_ordinal_loss: probs must sum to 1");
  double total = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j)
    total += std::abs(label_onehot[j] - probs[j]);
  // Mathematically in [0, 1]; clamp away summation dust.
  return std::clamp(total / 2.0, 0.0, 1.0);
}

double bounded_ordinal_loss(std::int32_t label, std::span<const double> probs) {
  std::vector<double> onehot(probs.size(), 0.0);
  onehot[static_cast<std::size_t>(label)] = 1.0;
  return bounded_ordinal_loss(onehot, probs);
}

double adapter_example_loss(LossKind kind, std::span<const double> adapter,
                            std::span<const double> features,
                            std::int32_t label, std::int64_t way) {
  switch (kind) {
    case LossKind::zero_one:
      return zero_one_loss(head_predict(adapter, features, way), label);
    case LossKind::bounded_ordinal: {
      std::vector<double> probs(static_cast<std::size_t>(way));
      head_softmax(adapter, features, way, probs);
      return bounded_ordinal_loss(label, probs);
    }
  }
  throw std::invalid_argument("unknown loss kind");
}

const char* bound_family_name(BoundFamily family) {
  switch (family) {
    case BoundFamily::finite_hypothesis: return "finite-hypothesis";
    case BoundFamily::quantization: return "quantization";
    case BoundFamily::vanilla_pac_bayes: return "vanilla-pac-bayes";
  }
  return "unknown";
}

std::string RiskCertificate::to_json() const {
  std::string out = "{\"family\":\"";
  out += bound_family_name(family);
  out += "\",\"r\":" + format_double(empirical_risk);
  out += ",\"complexity\":" + format_double(complexity);
  out += ",\"bound\":" + format_double(bound);
  out += ",\"n\":" + std::to_string(n);
  out += ",\"epsilon\":" + format_double(epsilon);
  out += ",\"C\":" + format_double(max_loss);
  if (hypothesis_count) out += ",\"M\":" + std::to_string(*hypothesis_count);
  if (code_bits) out += ",\"K\":" + std::to_string(*code_bits);
  if (kl) out += ",\"KL\":" + format_double(*kl);
  out += ",\"loss_name\":\"" + loss + "\"";
  out += ",\"seed\":" + std::to_string(seed);
  out += "}";
  return out;
}

namespace {

void check_common(double r, std::int64_t n, double epsilon, double max_loss) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("certificate: epsilon must be in (0, 1)");
  if (n < 1) throw std::invalid_argument("certificate: n must be >= 1");
  if (max_loss <= 0) throw std::invalid_argument("certificate: C must be > 0");
  if (r < 0 || r > max_loss)
    throw std::invalid_argument("certificate: empirical risk outside [0, C]");
}

}  // namespace

RiskCertificate finite_hypothesis_certificate(double empirical_risk,
                                              std::int64_t hypothesis_count,
                                              std::int64_t n, double epsilon,
                                              double max_loss) {
  check_common(empirical_risk, n, epsilon, max_loss);
  if (hypothesis_count < 1)
    throw std::invalid_argument("certificate: |Theta| must be >= 1");
  RiskCertificate cert;
  cert.family = BoundFamily::finite_hypothesis;
  cert.empirical_risk = empirical_risk;
  cert.complexity =
      max_loss * std::sqrt(std::log(static_cast<double>(hypothesis_count) / epsilon) /
                           (2.0 * static_cast<double>(n)));
  cert.bound = cert.empirical_risk + cert.complexity;
  cert.n = n;
  cert.epsilon = epsilon;
  cert.max_loss = max_loss;
  cert.hypothesis_count = hypothesis_count;
  return cert;
}

QuantizationCodec quantization_codec(std::span<const double> values,
                                     const QuantizationCodecConfig& config) {
  if (values.empty()) throw std::invalid_argument("quantization: empty vector");
  if (config.levels < 1)
    throw std::invalid_argument("quantization: levels must be >= 1");
  const auto d = static_cast<std::int64_t>(values.size());
  const std::int64_t levels = std::min<std::int64_t>(config.levels, d);

  // Cluster the sorted copy so the codebook (and hence K) is invariant to
  // permutations of the entries.
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  Matrix column(d, 1);
  for (std::int64_t i = 0; i < d; ++i) column(i, 0) = sorted[i];
  const Clustering clusters = kmeans_cluster(column, levels, config.seed);

  QuantizationCodec codec;
  codec.centers.resize(static_cast<std::size_t>(levels));
  for (std::int64_t c = 0; c < levels; ++c)
    codec.centers[static_cast<std::size_t>(c)] = clusters.centroids(c, 0);
  std::sort(codec.centers.begin(), codec.centers.end());
  codec.frequencies.assign(static_cast<std::size_t>(levels), 0);
  for (std::int64_t i = 0; i < d; ++i) {
    std::int64_t best = 0;
    double best_d = std::abs(values[i] - codec.centers[0]);
    for (std::int64_t c = 1; c < levels; ++c) {
      const double dist = std::abs(values[i] - codec.centers[c]);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    ++codec.frequencies[static_cast<std::size_t>(best)];
  }

  // Shannon ideal length against the empirical symbol distribution, plus a
  // 2-bit coder margin whenever any payload bits are emitted at all.
  double bits = 0.0;
  for (std::int64_t c = 0; c < levels; ++c) {
    const auto freq = static_cast<double>(codec.frequencies[c]);
    if (freq == 0.0) continue;
    const double p = freq / static_cast<double>(d);
    bits -= freq * std::log2(p);
  }
  std::int64_t code = bits > 0.0 ? static_cast<std::int64_t>(std::ceil(bits)) + 2 : 0;
  if (config.include_codebook) code += config.codebook_entry_bits * levels;
  codec.code_bits = std::max<std::int64_t>(1, code);
  return codec;
}

std::int64_t quantization_complexity(std::span<const double> values,
                                     const QuantizationCodecConfig& config) {
  return quantization_codec(values, config).code_bits;
}

RiskCertificate quantization_certificate(double empirical_risk,
                                         std::int64_t code_bits, std::int64_t n,
                                         double epsilon, double max_loss) {
  check_common(empirical_risk, n, epsilon, max_loss);
  if (code_bits < 1) throw std::invalid_argument("certificate: K must be >= 1");
  const double k = static_cast<double>(code_bits);
  RiskCertificate cert;
  cert.family = BoundFamily::quantization;
  cert.empirical_risk = empirical_risk;
  cert.complexity =
      max_loss * std::sqrt((k + 2.0 * std::log(k) + std::log(1.0 / epsilon)) /
                           (2.0 * static_cast<double>(n)));
  cert.bound = cert.empirical_risk + cert.complexity;
  cert.n = n;
  cert.epsilon = epsilon;
  cert.max_loss = max_loss;
  cert.code_bits = code_bits;
  return cert;
}

double gaussian_kl(const GaussianPosterior& posterior) {
  if (posterior.mu.size() != posterior.sigma.size())
    throw std::invalid_argument("gaussian_kl: mu/sigma size mismatch");
  const double kappa = posterior.prior_scale;
  if (kappa <= 0) throw std::invalid_argument("gaussian_kl: kappa must be > 0");
  const double inv_2k2 = 1.0 / (2.0 * kappa * kappa);
  double kl = 0.0;
  for (std::size_t i = 0; i < posterior.mu.size(); ++i) {
    const double s = posterior.sigma[i];
    if (s <= 0) throw std::invalid_argument("gaussian_kl: sigma must be > 0");
    const double m = posterior.mu[i];
    kl += std::log(kappa / s) + (s * s + m * m) * inv_2k2 - 0.5;
  }
  return kl;
}

namespace {

double pb_complexity(double kl, std::int64_t n, double epsilon) {
  return std::sqrt((kl + std::log(1.0 / epsilon)) /
                   (2.0 * static_cast<double>(n)));
}

// Smooth bounded surrogate gradient: d/dlogits of bounded_ordinal(y, softmax).
void surrogate_logit_grad(std::span<const double> probs, std::int32_t label,
                          std::span<double> grad) {
  const auto way = static_cast<std::int64_t>(probs.size());
  double weighted = 0.0;
  for (std::int64_t j = 0; j < way; ++j) {
    const double target = (j == label) ? 1.0 : 0.0;
    const double sign = probs[j] > target ? 1.0 : (probs[j] < target ? -1.0 : 0.0);
    weighted += sign * probs[j];
  }
  for (std::int64_t c = 0; c < way; ++c) {
    const double target = (c == label) ? 1.0 : 0.0;
    const double sign = probs[c] > target ? 1.0 : (probs[c] < target ? -1.0 : 0.0);
    grad[c] = 0.5 * probs[c] * (sign - weighted);
  }
}

}  // namespace

double posterior_set_risk(const GaussianPosterior& posterior,
                          const LabeledSet& set, std::int64_t way,
                          LossKind loss, std::int64_t mc_samples,
                          std::uint64_t seed) {
  if (set.size() == 0)
    throw std::invalid_argument("posterior_set_risk: empty set");
  if (mc_samples < 1)
    throw std::invalid_argument("posterior_set_risk: mc_samples must be >= 1");
  const auto dim = static_cast<std::int64_t>(posterior.mu.size());
  Rng rng(substream(seed, "bounds/vanilla-eval"));
  std::vector<double> theta(static_cast<std::size_t>(dim));
  double risk_sum = 0.0;
  for (std::int64_t s = 0; s < mc_samples; ++s) {
    for (std::int64_t i = 0; i < dim; ++i)
      theta[i] = posterior.mu[i] + posterior.sigma[i] * rng.normal();
    double ex = 0.0;
    for (std::int64_t i = 0; i < set.size(); ++i)
      ex += adapter_example_loss(loss, theta, set.features.row(i),
                                 set.labels[i], way);
    risk_sum += ex / static_cast<double>(set.size());
  }
  return risk_sum / static_cast<double>(mc_samples);
}

RiskCertificate vanilla_pacbayes_evaluate(const GaussianPosterior& posterior,
                                          const LabeledSet& support,
                                          std::int64_t way, double epsilon,
                                          LossKind loss, std::int64_t mc_samples,
                                          std::uint64_t seed) {
  if (support.size() == 0)
    throw std::invalid_argument("vanilla certificate: empty support");
  const std::int64_t n = support.size();
  const double kl = gaussian_kl(posterior);
  RiskCertificate cert;
  cert.family = BoundFamily::vanilla_pac_bayes;
  cert.empirical_risk =
      posterior_set_risk(posterior, support, way, loss, mc_samples, seed);
  cert.complexity = pb_complexity(kl, n, epsilon);
  cert.bound = cert.empirical_risk + cert.complexity;
  cert.n = n;
  cert.epsilon = epsilon;
  cert.max_loss = loss_max(loss);
  cert.kl = kl;
  cert.loss = loss_name(loss);
  cert.seed = seed;
  return cert;
}

RiskCertificate vanilla_pacbayes_certificate(GaussianPosterior& posterior,
                                             const LabeledSet& support,
                                             std::int64_t way, double epsilon,
                                             const VanillaPbConfig& config) {
  if (support.size() == 0)
    throw std::invalid_argument("vanilla certificate: empty support");
  if (!(epsilon > 0 && epsilon < 1))
    throw std::invalid_argument("vanilla certificate: epsilon in (0,1)");
  const std::int64_t d_feat = support.features.cols();
  const std::int64_t dim = way * d_feat + way;
  const std::int64_t n = support.size();

  posterior.prior_scale = config.prior_scale;
  if (static_cast<std::int64_t>(posterior.mu.size()) != dim) {
    posterior.mu.assign(static_cast<std::size_t>(dim), 0.0);
    posterior.sigma.assign(static_cast<std::size_t>(dim), config.sigma_init);
  }

  // Optimize (mu, log sigma), Adam, reparameterized surrogate gradients.
  std::vector<double> log_sigma(static_cast<std::size_t>(dim));
  for (std::int64_t i = 0; i < dim; ++i)
    log_sigma[i] = std::log(std::max(posterior.sigma[i], config.sigma_floor));

  OptimizerConfig opt_cfg;
  opt_cfg.kind = OptimizerKind::adam;
  opt_cfg.lr = config.opt_lr;
  const std::array<std::int64_t, 2> sizes = {dim, dim};
  Optimizer opt(opt_cfg, sizes);

  Rng rng(substream(config.seed, "bounds/vanilla-opt"));
  std::vector<double> theta(static_cast<std::size_t>(dim));
  std::vector<double> z(static_cast<std::size_t>(dim));
  std::vector<double> g_theta(static_cast<std::size_t>(dim));
  std::vector<double> g_mu(static_cast<std::size_t>(dim));
  std::vector<double> g_ls(static_cast<std::size_t>(dim));
  std::vector<double> probs(static_cast<std::size_t>(way));
  std::vector<double> logit_grad(static_cast<std::size_t>(way));
  const double kappa2 = config.prior_scale * config.prior_scale;
  const double log_eps_term = std::log(1.0 / epsilon);

  for (std::int64_t step = 0; step < config.opt_steps; ++step) {
    std::fill(g_mu.begin(), g_mu.end(), 0.0);
    std::fill(g_ls.begin(), g_ls.end(), 0.0);
    for (std::int64_t s = 0; s < config.train_mc; ++s) {
      for (std::int64_t i = 0; i < dim; ++i) {
        z[i] = rng.normal();
        theta[i] = posterior.mu[i] + std::exp(log_sigma[i]) * z[i];
      }
      std::fill(g_theta.begin(), g_theta.end(), 0.0);
      for (std::int64_t i = 0; i < n; ++i) {
        const auto x = support.features.row(i);
        head_softmax(theta, x, way, probs);
        surrogate_logit_grad(probs, support.labels[i], logit_grad);
        for (std::int64_t c = 0; c < way; ++c) {
          axpy(logit_grad[c], x,
               std::span<double>(g_theta).subspan(c * d_feat, d_feat));
          g_theta[way * d_feat + c] += logit_grad[c];
        }
      }
      const double scale = 1.0 / (static_cast<double>(n) *
                                  static_cast<double>(config.train_mc));
      for (std::int64_t i = 0; i < dim; ++i) {
        g_mu[i] += scale * g_theta[i];
        g_ls[i] += scale * g_theta[i] * std::exp(log_sigma[i]) * z[i];
      }
    }

    // Complexity-term gradient through KL.
    double kl = 0.0;
    for (std::int64_t i = 0; i < dim; ++i) {
      const double sig = std::exp(log_sigma[i]);
      kl += std::log(config.prior_scale / sig) +
            (sig * sig + posterior.mu[i] * posterior.mu[i]) / (2.0 * kappa2) - 0.5;
    }
    const double comp = std::sqrt(std::max(kl + log_eps_term, 1e-12) /
                                  (2.0 * static_cast<double>(n)));
    const double dcomp_dkl = 1.0 / (4.0 * static_cast<double>(n) * comp);
    for (std::int64_t i = 0; i < dim; ++i) {
      const double sig = std::exp(log_sigma[i]);
      g_mu[i] += dcomp_dkl * posterior.mu[i] / kappa2;
      g_ls[i] += dcomp_dkl * (-1.0 + sig * sig / kappa2);
    }

    const std::array<std::span<double>, 2> params = {std::span<double>(posterior.mu),
                                                     std::span<double>(log_sigma)};
    const std::array<std::span<const double>, 2> grads = {
        std::span<const double>(g_mu), std::span<const double>(g_ls)};
    opt.step(params, grads);
    for (double& ls : log_sigma)
      ls = std::max(ls, std::log(config.sigma_floor));
  }

  for (std::int64_t i = 0; i < dim; ++i)
    posterior.sigma[i] = std::exp(log_sigma[i]);

  RiskCertificate cert = vanilla_pacbayes_evaluate(
      posterior, support, way, epsilon, config.certify_loss, config.mc_samples,
      config.seed);
  return cert;
}

}  // namespace steel
