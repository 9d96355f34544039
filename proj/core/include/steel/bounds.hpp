#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "steel/taskgen.hpp"

namespace steel {

enum class LossKind { zero_one, bounded_ordinal };

const char* loss_name(LossKind kind);
LossKind loss_from_name(std::string_view name);
// Maximal loss value C; both registered losses are normalized to [0, 1].
double loss_max(LossKind kind);

double zero_one_loss(std::int32_t prediction, std::int32_t label);
// Total-variation style bounded loss: sum_j |y_j - p_j| / 2 in [0, 1].
double bounded_ordinal_loss(std::span<const double> label_onehot,
                            std::span<const double> probs);
double bounded_ordinal_loss(std::int32_t label, std::span<const double> probs);

// Per-example loss of a linear-head adapter.
double adapter_example_loss(LossKind kind, std::span<const double> adapter,
                            std::span<const double> features,
                            std::int32_t label, std::int64_t way);

enum class BoundFamily { finite_hypothesis, quantization, vanilla_pac_bayes };

const char* bound_family_name(BoundFamily family);

struct RiskCertificate {
  BoundFamily family = BoundFamily::finite_hypothesis;
  double empirical_risk = 0.0;
  double complexity = 0.0;
  double bound = 0.0;  // empirical_risk + complexity, exactly
  std::int64_t n = 0;
  double epsilon = 0.0;
  double max_loss = 1.0;
  // Exactly one of the three is set, matching the family.
  std::optional<std::int64_t> hypothesis_count;
  std::optional<std::int64_t> code_bits;
  std::optional<double> kl;
  std::string loss;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

// complexity = C * sqrt(ln(M / eps) / (2n)), natural log.
RiskCertificate finite_hypothesis_certificate(double empirical_risk,
                                              std::int64_t hypothesis_count,
                                              std::int64_t n, double epsilon,
                                              double max_loss);

struct QuantizationCodecConfig {
  std::int64_t levels = 16;
  bool include_codebook = true;
  std::int64_t codebook_entry_bits = 32;
  std::uint64_t seed = 0;  // 1-D k-means seeding
};

struct QuantizationCodec {
  std::vector<double> centers;
  std::vector<std::int64_t> frequencies;
  std::int64_t code_bits = 0;  // total K in bits
};

// Quantize entries to the nearest of L 1-D k-means centers; K is the Shannon
// ideal code length (ceil, +2 bit coder margin when nonempty) plus the
// 32-bit-per-entry codebook payload. K >= 1 always.
QuantizationCodec quantization_codec(std::span<const double> values,
                                     const QuantizationCodecConfig& config);
std::int64_t quantization_complexity(std::span<const double> values,
                                     const QuantizationCodecConfig& config);

// complexity = C * sqrt((K + 2 ln K + ln(1/eps)) / (2n)), natural log.
RiskCertificate quantization_certificate(double empirical_risk,
                                         std::int64_t code_bits, std::int64_t n,
                                         double epsilon, double max_loss);

struct GaussianPosterior {
  std::vector<double> mu;
  std::vector<double> sigma;  // diagonal, elementwise > 0
  double prior_scale = 1.0;   // prior N(0, prior_scale^2 I)
};

// KL(N(mu, diag sigma^2) || N(0, kappa^2 I))
//   = sum_i [ ln(kappa/sigma_i) + (sigma_i^2 + mu_i^2)/(2 kappa^2) - 1/2 ].
double gaussian_kl(const GaussianPosterior& posterior);

struct VanillaPbConfig {
  std::int64_t opt_steps = 500;
  double opt_lr = 1e-2;
  std::int64_t train_mc = 8;    // reparameterized samples per step
  std::int64_t mc_samples = 128;  // final certificate estimate
  double sigma_init = 0.5;
  double sigma_floor = 1e-4;
  double prior_scale = 1.0;
  LossKind certify_loss = LossKind::zero_one;
  std::uint64_t seed = 0;
};

// Optimizes (mu, log sigma) of a Gaussian posterior over adapter space by
// minimizing the certificate right-hand side with reparameterized gradients
// of a smooth bounded surrogate, then reports the Monte-Carlo certificate
// for the configured loss. complexity = sqrt((KL + ln(1/eps)) / (2n)).
RiskCertificate vanilla_pacbayes_certificate(GaussianPosterior& posterior,
                                             const LabeledSet& support,
                                             std::int64_t way, double epsilon,
                                             const VanillaPbConfig& config);

// Certificate from an already-fit posterior, no optimization.
RiskCertificate vanilla_pacbayes_evaluate(const GaussianPosterior& posterior,
                                          const LabeledSet& support,
                                          std::int64_t way, double epsilon,
                                          LossKind loss, std::int64_t mc_samples,
                                          std::uint64_t seed);

// Monte-Carlo estimate of E_Q[mean loss over the set].
double posterior_set_risk(const GaussianPosterior& posterior,
                          const LabeledSet& set, std::int64_t way,
                          LossKind loss, std::int64_t mc_samples,
                          std::uint64_t seed);

}  // namespace steel
