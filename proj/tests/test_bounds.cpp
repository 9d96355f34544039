#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "steel/bounds.hpp"
#include "steel/errors.hpp"
#include "steel/rng.hpp"
#include "steel/taskgen.hpp"
#include "steel/zoo.hpp"

using namespace steel;

TEST_CASE("finite-hypothesis complexity matches high-precision evaluations") {
  // Frozen from an independent 50-digit evaluation of sqrt(ln(M/eps) / (2n)).
  const RiskCertificate big =
      finite_hypothesis_certificate(0.1, 20000, 80, 0.05, 1.0);
  CHECK(big.complexity ==
        doctest::Approx(0.28393683084986217).epsilon(1e-12));
  CHECK(big.bound == big.empirical_risk + big.complexity);
  CHECK(*big.hypothesis_count == 20000);

  const RiskCertificate mid =
      finite_hypothesis_certificate(0.0, 10000, 256, 0.05, 1.0);
  CHECK(mid.complexity ==
        doctest::Approx(0.15440202600937955).epsilon(1e-12));
}

TEST_CASE("single hypothesis with epsilon near 1 gives a near-zero complexity") {
  const RiskCertificate cert =
      finite_hypothesis_certificate(0.3, 1, 80, 1.0 - 1e-9, 1.0);
  CHECK(cert.complexity < 1e-4);
  CHECK(cert.bound == doctest::Approx(0.3).epsilon(1e-4));
}

TEST_CASE("certificate input validation") {
  CHECK_THROWS_AS(finite_hypothesis_certificate(0.1, 10, 80, 0.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(finite_hypothesis_certificate(0.1, 10, 80, 1.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(finite_hypothesis_certificate(0.1, 0, 80, 0.05, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(finite_hypothesis_certificate(1.5, 10, 80, 0.05, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(quantization_certificate(0.1, 0, 80, 0.05, 1.0),
                  std::invalid_argument);
}

TEST_CASE("quantization certificate matches high-precision evaluations") {
  // Best case K = d for d = 1024, n = 80 (16-shot 5-way).
  const RiskCertificate a = quantization_certificate(0.0, 1024, 80, 0.05, 1.0);
  CHECK(a.complexity == doctest::Approx(2.5505620408607405).epsilon(1e-12));
  CHECK(std::abs(a.complexity - 2.55) < 0.005);

  const RiskCertificate b = quantization_certificate(0.0, 2592, 256, 0.05, 1.0);
  CHECK(b.complexity == doctest::Approx(2.2581086970023245).epsilon(1e-12));

  // n -> infinity drives the complexity to zero.
  const RiskCertificate c =
      quantization_certificate(0.0, 1024, 2000000000, 0.05, 1.0);
  CHECK(c.complexity < 2e-3);
}

TEST_CASE("quantization codec: constant vector costs only the codebook") {
  std::vector<double> values(500, 1.25);
  QuantizationCodecConfig cfg;
  cfg.levels = 1;
  CHECK(quantization_complexity(values, cfg) == 32);
  cfg.include_codebook = false;
  CHECK(quantization_complexity(values, cfg) == 1);  // K >= 1 enforced
}

TEST_CASE("quantization codec: even binary split costs about one bit per entry") {
  std::vector<double> values(1024);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = (i % 2 == 0) ? -1.0 : 1.0;
  QuantizationCodecConfig cfg;
  cfg.levels = 2;
  const QuantizationCodec codec = quantization_codec(values, cfg);
  // Entropy oracle: 1024 symbols at 1 bit each, +2 coder margin, +64 codebook.
  CHECK(codec.code_bits == 1024 + 2 + 64);
  CHECK(codec.frequencies[0] + codec.frequencies[1] == 1024);
}

TEST_CASE("quantization code length is invariant to permutations") {
  Rng rng(4);
  std::vector<double> values(257);
  for (double& v : values) v = rng.normal();
  QuantizationCodecConfig cfg;
  cfg.levels = 8;
  const std::int64_t before = quantization_complexity(values, cfg);
  rng.shuffle(values);
  CHECK(quantization_complexity(values, cfg) == before);
}

TEST_CASE("coded length never exceeds raw storage plus codebook") {
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> values(64 + rng.below(200));
    for (double& v : values) v = rng.normal() * 10;
    QuantizationCodecConfig cfg;
    cfg.levels = 1 + static_cast<std::int64_t>(rng.below(16));
    const std::int64_t k = quantization_complexity(values, cfg);
    CHECK(k <= 32 * static_cast<std::int64_t>(values.size()) + 32 * cfg.levels);
  }
}

TEST_CASE("gaussian KL closed form") {
  GaussianPosterior same;
  same.mu = {0.0, 0.0, 0.0};
  same.sigma = {1.0, 1.0, 1.0};
  same.prior_scale = 1.0;
  CHECK(gaussian_kl(same) == doctest::Approx(0.0));

  GaussianPosterior shifted;
  shifted.mu = {1.0, 0.0};
  shifted.sigma = {1.0, 1.0};
  shifted.prior_scale = 1.0;
  CHECK(gaussian_kl(shifted) == doctest::Approx(0.5));

  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    GaussianPosterior p;
    p.prior_scale = 0.5 + rng.uniform() * 2;
    for (int i = 0; i < 5; ++i) {
      p.mu.push_back(rng.normal());
      p.sigma.push_back(0.1 + rng.uniform() * 3);
    }
    CHECK(gaussian_kl(p) >= -1e-12);
  }

  GaussianPosterior bad;
  bad.mu = {0.0};
  bad.sigma = {-1.0};
  CHECK_THROWS_AS(gaussian_kl(bad), std::invalid_argument);
}

TEST_CASE("KL over sigma is minimized at sigma = kappa for zero mean") {
  auto kl_at = [](double sigma) {
    GaussianPosterior p;
    p.mu = {0.0};
    p.sigma = {sigma};
    p.prior_scale = 1.0;
    return gaussian_kl(p);
  };
  CHECK(kl_at(1.0) < kl_at(0.5));
  CHECK(kl_at(1.0) < kl_at(2.0));
  CHECK(kl_at(1.0) == doctest::Approx(0.0));
}

TEST_CASE("zero-one and bounded ordinal losses") {
  CHECK(zero_one_loss(3, 3) == 0.0);
  CHECK(zero_one_loss(3, 4) == 1.0);

  const std::vector<double> onehot = {1.0, 0.0};
  const std::vector<double> opposite = {0.0, 1.0};
  CHECK(bounded_ordinal_loss(onehot, opposite) == doctest::Approx(1.0));
  CHECK(bounded_ordinal_loss(onehot, onehot) == doctest::Approx(0.0));

  const std::vector<double> y3 = {1.0, 0.0, 0.0};
  const std::vector<double> p3 = {0.5, 0.25, 0.25};
  CHECK(bounded_ordinal_loss(y3, p3) == doctest::Approx(0.5));

  const std::vector<double> not_dist = {0.9, 0.9, 0.9};
  CHECK_THROWS_AS(bounded_ordinal_loss(y3, not_dist), std::invalid_argument);
}

TEST_CASE("registered losses stay within [0, C] on fuzzed inputs") {
  Rng rng(12);
  const std::int64_t way = 5, d_feat = 8;
  std::vector<double> adapter(static_cast<std::size_t>(way * d_feat + way));
  std::vector<double> x(static_cast<std::size_t>(d_feat));
  for (int rep = 0; rep < 500; ++rep) {
    for (double& v : adapter) v = rng.normal() * 5;
    for (double& v : x) v = rng.normal() * 5;
    const auto label = static_cast<std::int32_t>(rng.below(way));
    for (LossKind kind : {LossKind::zero_one, LossKind::bounded_ordinal}) {
      const double l = adapter_example_loss(kind, adapter, x, label, way);
      CHECK(l >= 0.0);
      CHECK(l <= loss_max(kind));
    }
  }
}

TEST_CASE("monotonicity of the finite-hypothesis complexity") {
  Rng rng(13);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(100000));
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(10000));
    const double eps = 0.001 + 0.99 * rng.uniform();
    const double base =
        finite_hypothesis_certificate(0.0, m, n, eps, 1.0).complexity;
    CHECK(finite_hypothesis_certificate(0.0, m + 1 + rng.below(100), n, eps, 1.0)
              .complexity > base);
    CHECK(finite_hypothesis_certificate(0.0, m, n + 1 + rng.below(100), eps, 1.0)
              .complexity < base);
    const double eps2 = eps + (0.9999 - eps) * (0.1 + 0.9 * rng.uniform());
    if (eps2 > eps)
      CHECK(finite_hypothesis_certificate(0.0, m, n, eps2, 1.0).complexity <
            base);
  }
}

TEST_CASE("vanilla PAC-Bayes: complexity at KL = 0 and point-mass behavior") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 3);
  const Episode ep = sample_episode(cfg, task, 16, 1, 21);
  REQUIRE(ep.support.size() == 80);

  GaussianPosterior prior_posterior;
  prior_posterior.mu.assign(static_cast<std::size_t>(cfg.adapter_dim()), 0.0);
  prior_posterior.sigma.assign(static_cast<std::size_t>(cfg.adapter_dim()), 1.0);
  prior_posterior.prior_scale = 1.0;
  const RiskCertificate cert = vanilla_pacbayes_evaluate(
      prior_posterior, ep.support, cfg.way, 0.05, LossKind::zero_one, 32, 5);
  CHECK(cert.complexity == doctest::Approx(0.13683320762779934).epsilon(1e-12));
  CHECK(*cert.kl == doctest::Approx(0.0));
  CHECK(cert.bound == cert.empirical_risk + cert.complexity);

  // Point-mass-like posterior at a zero-support-error adapter.
  AdapterTrainConfig train;
  train.epochs = 600;
  const AdapterVector adapter = train_adapter(ep, train);
  REQUIRE(head_error(adapter.values, ep.support, cfg.way) == 0.0);
  GaussianPosterior point;
  point.mu = adapter.values;
  point.sigma.assign(adapter.values.size(), 1e-7);
  point.prior_scale = 1.0;
  const RiskCertificate pcert = vanilla_pacbayes_evaluate(
      point, ep.support, cfg.way, 0.05, LossKind::zero_one, 32, 5);
  CHECK(pcert.empirical_risk == doctest::Approx(0.0));
  CHECK(pcert.bound == doctest::Approx(pcert.complexity));
}

TEST_CASE("vanilla PAC-Bayes optimization tightens the certificate") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 9);
  const Episode ep = sample_episode(cfg, task, 16, 1, 33);

  VanillaPbConfig vcfg;
  vcfg.opt_steps = 200;
  vcfg.mc_samples = 64;
  vcfg.seed = 7;
  GaussianPosterior posterior;
  const RiskCertificate tuned =
      vanilla_pacbayes_certificate(posterior, ep.support, cfg.way, 0.05, vcfg);

  GaussianPosterior untouched;
  untouched.mu.assign(static_cast<std::size_t>(cfg.adapter_dim()), 0.0);
  untouched.sigma.assign(static_cast<std::size_t>(cfg.adapter_dim()),
                         vcfg.sigma_init);
  untouched.prior_scale = vcfg.prior_scale;
  const RiskCertificate raw = vanilla_pacbayes_evaluate(
      untouched, ep.support, cfg.way, 0.05, LossKind::zero_one, 64, 7);

  CHECK(tuned.bound < raw.bound);
  CHECK(tuned.bound == tuned.empirical_risk + tuned.complexity);
  CHECK(*tuned.kl >= 0.0);
}

TEST_CASE("certificate JSON carries exactly one complexity input") {
  const RiskCertificate fin =
      finite_hypothesis_certificate(0.25, 100, 40, 0.05, 1.0);
  const std::string j = fin.to_json();
  CHECK(j.find("\"M\":100") != std::string::npos);
  CHECK(j.find("\"K\":") == std::string::npos);
  CHECK(j.find("\"KL\":") == std::string::npos);
}
