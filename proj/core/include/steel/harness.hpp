#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steel/bounds.hpp"
#include "steel/diffusion.hpp"
#include "steel/select.hpp"
#include "steel/taskgen.hpp"
#include "steel/zoo.hpp"

namespace steel {

// Gradient-descent comparison arm: a plain full-batch GD head over a wider
// frozen feature map (d = feature_dim * way + way), certified with the
// parameter-quantization bound.
struct SgdBaselineConfig {
  std::int64_t feature_dim = 512;
  double lr = 0.5;
  double momentum = 0.9;
  std::int64_t epochs = 400;
  // Best-case bound uses K = d bits; otherwise K comes from the arithmetic
  // codec estimate on the trained adapter.
  bool bound_best_case = true;
  QuantizationCodecConfig codec;
};

AdapterVector train_sgd_baseline(const LabeledSet& support, std::int64_t way,
                                 const SgdBaselineConfig& config);

struct BenchmarkConfig {
  int version = 1;
  std::uint64_t master_seed = 1;
  std::string out_dir = "bench-out";

  TaskDistributionConfig dist;
  ZooBuildConfig zoo;
  std::int64_t zoo_tasks = 500;
  DiffusionTrainConfig diffusion;
  std::int64_t samples = 2000;

  std::vector<std::string> methods = {"steel", "model-zoo", "union",
                                      "sgd-baseline", "vanilla-pb"};
  SearchMethod search = SearchMethod::exhaustive;
  HierConfig hier;

  std::vector<std::int64_t> shots = {1, 2, 4, 8, 16};
  std::int64_t episodes_per_shot = 40;
  std::int64_t query_per_class = 400;
  double epsilon = 0.05;
  LossKind loss = LossKind::zero_one;

  SgdBaselineConfig sgd;
  VanillaPbConfig vanilla;

  BenchmarkConfig() {
    // Desk-scale default: hidden = 4*d without the 512 rounding floor.
    diffusion.denoiser.round_hidden_to_512 = false;
  }

  std::string to_json() const;
  static BenchmarkConfig from_json(const std::string& text);
  static BenchmarkConfig load(const std::string& path);
  void save(const std::string& path) const;
};

struct MethodResult {
  std::string method;
  bool has_selection = false;
  SelectionResult selection;  // set-based methods only
  RiskCertificate certificate;
  double query_risk = 0.0;
  double query_accuracy = 0.0;
  double wall_seconds = 0.0;  // kept out of the deterministic JSONL
};

struct EpisodeResult {
  std::int64_t episode_index = 0;
  std::int64_t shots = 0;
  std::int64_t way = 0;
  std::uint64_t seed = 0;
  std::string hyp_hash;  // fingerprint of the pre-registered hypothesis sets
  std::vector<MethodResult> methods;

  std::string to_json() const;
  static EpisodeResult from_json(const std::string& line);
};

// Artifacts fixed before any episode runs. The benchmark always round-trips
// them through their files, so on-disk and in-memory states agree.
struct BenchmarkArtifacts {
  ModelZoo zoo;
  bool has_checkpoint = false;
  DiffusionCheckpoint checkpoint;
  std::vector<std::pair<Strategy, HypothesisSet>> sets;
  std::vector<std::pair<Strategy, HierarchyIndex>> hierarchies;
  Backbone baseline_backbone;
  std::string combined_hash;

  const HypothesisSet* find_set(Strategy s) const;
  const HierarchyIndex* find_hierarchy(Strategy s) const;
};

BenchmarkArtifacts prepare_artifacts(const BenchmarkConfig& config);

EpisodeResult run_episode(const BenchmarkConfig& config,
                          const BenchmarkArtifacts& artifacts,
                          std::int64_t shots, std::int64_t episode_index);

// Chance-level threshold: 1 - 1/way for the 0/1 loss, C otherwise.
double vacuous_threshold(LossKind loss, std::int64_t way, double max_loss);

struct MethodAggregate {
  std::string method;
  std::int64_t episodes = 0;
  double pct_non_vacuous = 0.0;
  double median_gap = 0.0;
  double min_bound = 0.0;
  double median_bound = 0.0;
  double max_bound = 0.0;
  double mean_query_accuracy = 0.0;
  double mean_support_risk = 0.0;
  double mean_query_risk = 0.0;
};

struct AggregateStats {
  std::vector<MethodAggregate> per_method;
  const MethodAggregate* find(std::string_view method) const;
};

AggregateStats aggregate(const std::vector<EpisodeResult>& results,
                         LossKind loss, std::int64_t way, double max_loss);
// Same, restricted to one shot count (pass -1 for all).
AggregateStats aggregate_for_shots(const std::vector<EpisodeResult>& results,
                                   std::int64_t shots, LossKind loss,
                                   std::int64_t way, double max_loss);

struct BenchmarkOutput {
  AggregateStats overall;
  std::vector<EpisodeResult> episodes;
  std::string results_path;
};

BenchmarkOutput run_benchmark(const BenchmarkConfig& config);

struct CurvePoint {
  std::int64_t m = 0;
  double best_risk = 0.0;
  double complexity = 0.0;
  double bound = 0.0;
};

// Prefix trace over candidate losses in generation order: running-min risk,
// finite-hypothesis complexity at |Theta| = m, and their sum.
std::vector<CurvePoint> learning_curve_from_losses(
    std::span<const double> losses, std::int64_t n, double epsilon,
    double max_loss, std::int64_t stride);

std::vector<CurvePoint> learning_curve(const HypothesisSet& hypotheses,
                                       const LabeledSet& support, LossKind loss,
                                       std::int64_t way, double epsilon,
                                       double max_loss, std::int64_t stride);

}  // namespace steel
