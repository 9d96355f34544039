#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "steel/bounds.hpp"
#include "steel/diffusion.hpp"
#include "steel/matrix.hpp"
#include "steel/zoo.hpp"

namespace steel {

enum class Strategy { model_zoo, steel, unioned };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(std::string_view name);

// Finite candidate set, fixed before any downstream data is seen. The size
// recorded here is exactly the |Theta| that certificates use.
struct HypothesisSet {
  Matrix rows;  // M x d
  std::vector<Provenance> provenance;
  Strategy strategy = Strategy::steel;
  std::string source;  // zoo hash / checkpoint hash + sample seed
  std::string hash;    // content fingerprint

  std::int64_t size() const { return rows.rows(); }
  std::int64_t dim() const { return rows.cols(); }
};

std::string hypothesis_content_hash(const Matrix& rows);

HypothesisSet hypothesis_set_from_zoo(const ModelZoo& zoo);
// sample_params: M ancestral samples from the checkpoint's EMA weights.
HypothesisSet sample_params(const DiffusionCheckpoint& checkpoint,
                            std::int64_t m, std::uint64_t seed);
HypothesisSet union_hypothesis_set(const ModelZoo& zoo,
                                   const DiffusionCheckpoint& checkpoint,
                                   std::int64_t m, std::uint64_t seed);
// Union from an already-sampled set (no resampling); zoo rows first.
HypothesisSet union_of(const ModelZoo& zoo, const HypothesisSet& samples);

// Strategy dispatch; zoo is required for model-zoo/union, checkpoint for
// steel/union.
HypothesisSet build_hypothesis_set(Strategy strategy, const ModelZoo* zoo,
                                   const DiffusionCheckpoint* checkpoint,
                                   std::int64_t m, std::uint64_t seed);

void save_hypothesis_set(const HypothesisSet& set, const std::string& path);
HypothesisSet load_hypothesis_set(const std::string& path);

// Mean bounded loss of one candidate over the support set.
double eval_support_loss(std::span<const double> adapter,
                         const LabeledSet& support, LossKind loss,
                         std::int64_t way);

enum class SearchMethod { exhaustive, hierarchical };

const char* search_name(SearchMethod m);

struct SelectionResult {
  std::int64_t index = -1;
  AdapterVector theta;
  double risk = 0.0;  // empirical support risk of theta
  std::int64_t evaluations = 0;
  SearchMethod method = SearchMethod::exhaustive;

  struct Trace {
    std::int64_t chosen_k = 0;
    double silhouette = 0.0;
    std::vector<std::int64_t> medoids;
    std::vector<double> medoid_losses;
    std::vector<std::int64_t> shortlist;
    std::vector<double> shortlist_losses;
    bool fallback_exhaustive = false;
  };
  Trace trace;

  std::string to_json() const;
};

SelectionResult exhaustive_select(const HypothesisSet& hypotheses,
                                  const LabeledSet& support, LossKind loss,
                                  std::int64_t way);

struct HierConfig {
  std::int64_t k_min = 2;
  std::int64_t k_max = 150;
  // Standard practice picks the k maximizing the silhouette; minimize is
  // available as a variant.
  bool minimize_silhouette = false;
  std::int64_t shortlist = 15;
  std::int64_t depth = 1;  // 0 degenerates to exhaustive search
  // Scan every k when M <= full_scan_limit, else a geometric grid of at
  // most grid_points values.
  std::int64_t full_scan_limit = 500;
  std::int64_t grid_points = 32;
  std::uint64_t seed = 0;
};

// Top-level clustering is support-independent, so it can be computed once
// per hypothesis set and shared across episodes.
struct HierarchyIndex {
  std::int64_t chosen_k = 0;
  double silhouette = 0.0;
  std::vector<std::vector<std::int64_t>> clusters;  // member indices
  std::vector<std::int64_t> medoids;                // one per cluster
  bool collapsed = false;  // fewer distinct rows than any usable k
};

HierarchyIndex build_hierarchy(const Matrix& rows, const HierConfig& config);

SelectionResult hierarchical_select(const HypothesisSet& hypotheses,
                                    const LabeledSet& support, LossKind loss,
                                    std::int64_t way, const HierConfig& config,
                                    const HierarchyIndex* prebuilt = nullptr);

}  // namespace steel
