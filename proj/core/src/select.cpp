#include "steel/select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "steel/clustering.hpp"
#include "steel/hash.hpp"
#include "steel/rng.hpp"
#include "steel/serialize.hpp"
#include "steel/stzo_io.hpp"

namespace steel {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::model_zoo: return "model-zoo";
    case Strategy::steel: return "steel";
    case Strategy::unioned: return "union";
  }
  return "unknown";
}

Strategy strategy_from_name(std::string_view name) {
  if (name == "model-zoo") return Strategy::model_zoo;
  if (name == "steel") return Strategy::steel;
  if (name == "union") return Strategy::unioned;
  throw ConfigError("unknown strategy: " + std::string(name));
}

const char* search_name(SearchMethod m) {
  return m == SearchMethod::exhaustive ? "exhaustive" : "hierarchical";
}

std::string hypothesis_content_hash(const Matrix& rows) {
  const auto bytes = pack_f32(rows.storage());
  ByteHasher h;
  h.update_u64(static_cast<std::uint64_t>(rows.rows()));
  h.update_u64(static_cast<std::uint64_t>(rows.cols()));
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

HypothesisSet hypothesis_set_from_zoo(const ModelZoo& zoo) {
  HypothesisSet set;
  set.rows = zoo.rows;
  set.provenance.assign(static_cast<std::size_t>(zoo.size()),
                        Provenance::trained);
  set.strategy = Strategy::model_zoo;
  set.source = "zoo:" + zoo.manifest.config_hash;
  set.hash = hypothesis_content_hash(set.rows);
  return set;
}

HypothesisSet sample_params(const DiffusionCheckpoint& checkpoint,
                            std::int64_t m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("sample_params: m must be >= 1");
  HypothesisSet set;
  set.rows = sample_parameters(checkpoint, m, seed);
  set.provenance.assign(static_cast<std::size_t>(m), Provenance::diffusion);
  set.strategy = Strategy::steel;
  set.source = "ckpt-seed:" + std::to_string(seed);
  set.hash = hypothesis_content_hash(set.rows);
  return set;
}

namespace {

HypothesisSet union_rows(const ModelZoo& zoo, const Matrix& samples,
                         const std::string& sample_source) {
  if (zoo.dim() != samples.cols())
    throw std::invalid_argument("union: zoo and sample dims differ");
  const std::int64_t m = samples.rows();
  HypothesisSet set;
  set.rows = Matrix(zoo.size() + m, zoo.dim());
  for (std::int64_t i = 0; i < zoo.size(); ++i)
    std::copy(zoo.rows.row(i).begin(), zoo.rows.row(i).end(),
              set.rows.row(i).begin());
  for (std::int64_t i = 0; i < m; ++i)
    std::copy(samples.row(i).begin(), samples.row(i).end(),
              set.rows.row(zoo.size() + i).begin());
  set.provenance.assign(static_cast<std::size_t>(zoo.size()),
                        Provenance::trained);
  set.provenance.insert(set.provenance.end(), static_cast<std::size_t>(m),
                        Provenance::diffusion);
  set.strategy = Strategy::unioned;
  set.source = "zoo:" + zoo.manifest.config_hash + "+" + sample_source;
  set.hash = hypothesis_content_hash(set.rows);
  return set;
}

}  // namespace

HypothesisSet union_hypothesis_set(const ModelZoo& zoo,
                                   const DiffusionCheckpoint& checkpoint,
                                   std::int64_t m, std::uint64_t seed) {
  const Matrix samples = sample_parameters(checkpoint, m, seed);
  return union_rows(zoo, samples, "ckpt-seed:" + std::to_string(seed));
}

HypothesisSet union_of(const ModelZoo& zoo, const HypothesisSet& samples) {
  return union_rows(zoo, samples.rows, samples.source);
}

HypothesisSet build_hypothesis_set(Strategy strategy, const ModelZoo* zoo,
                                   const DiffusionCheckpoint* checkpoint,
                                   std::int64_t m, std::uint64_t seed) {
  switch (strategy) {
    case Strategy::model_zoo:
      if (!zoo) throw std::invalid_argument("model-zoo strategy needs a zoo");
      return hypothesis_set_from_zoo(*zoo);
    case Strategy::steel:
      if (!checkpoint)
        throw std::invalid_argument("steel strategy needs a checkpoint");
      return sample_params(*checkpoint, m, seed);
    case Strategy::unioned:
      if (!zoo || !checkpoint)
        throw std::invalid_argument("union strategy needs zoo and checkpoint");
      return union_hypothesis_set(*zoo, *checkpoint, m, seed);
  }
  throw std::invalid_argument("unknown strategy");
}

void save_hypothesis_set(const HypothesisSet& set, const std::string& path) {
  nlohmann::ordered_json manifest;
  manifest["kind"] = "hypotheses";
  manifest["n"] = set.size();
  manifest["d"] = set.dim();
  manifest["strategy"] = strategy_name(set.strategy);
  manifest["source"] = set.source;
  manifest["hash"] = set.hash;
  std::vector<std::string> prov;
  prov.reserve(set.provenance.size());
  for (Provenance p : set.provenance) prov.emplace_back(provenance_name(p));
  manifest["provenance"] = prov;
  save_stzo(path, set.rows, manifest.dump());
}

HypothesisSet load_hypothesis_set(const std::string& path) {
  StzoFile file = load_stzo(path);
  HypothesisSet set;
  try {
    const auto manifest = nlohmann::json::parse(file.manifest_json);
    if (manifest.at("kind").get<std::string>() != "hypotheses")
      throw FormatError("not a hypothesis set: " + path);
    if (manifest.at("n").get<std::int64_t>() != file.matrix.rows() ||
        manifest.at("d").get<std::int64_t>() != file.matrix.cols())
      throw FormatError("hypothesis manifest does not match payload: " + path);
    set.strategy = strategy_from_name(manifest.at("strategy").get<std::string>());
    set.source = manifest.at("source").get<std::string>();
    set.hash = manifest.at("hash").get<std::string>();
    for (const auto& p : manifest.at("provenance"))
      set.provenance.push_back(provenance_from_name(p.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt hypothesis manifest: " + std::string(e.what()));
  }
  if (set.provenance.size() != static_cast<std::size_t>(file.matrix.rows()))
    throw FormatError("hypothesis provenance count mismatch: " + path);
  set.rows = std::move(file.matrix);
  return set;
}

double eval_support_loss(std::span<const double> adapter,
                         const LabeledSet& support, LossKind loss,
                         std::int64_t way) {
  if (support.size() == 0)
    throw std::invalid_argument("eval_support_loss: empty support");
  double total = 0.0;
  for (std::int64_t i = 0; i < support.size(); ++i)
    total += adapter_example_loss(loss, adapter, support.features.row(i),
                                  support.labels[i], way);
  return total / static_cast<double>(support.size());
}

namespace {

AdapterVector adapter_from_row(const HypothesisSet& hypotheses,
                               std::int64_t index) {
  AdapterVector theta;
  const auto row = hypotheses.rows.row(index);
  theta.values.assign(row.begin(), row.end());
  theta.provenance = hypotheses.provenance[static_cast<std::size_t>(index)];
  return theta;
}

}  // namespace

std::string SelectionResult::to_json() const {
  std::string out = "{\"selected_index\":" + std::to_string(index);
  out += ",\"risk\":" + format_double(risk);
  out += ",\"evaluations\":" + std::to_string(evaluations);
  out += ",\"search\":\"";
  out += search_name(method);
  out += "\"";
  if (method == SearchMethod::hierarchical) {
    out += ",\"trace\":{\"chosen_k\":" + std::to_string(trace.chosen_k);
    out += ",\"silhouette\":" + format_double(trace.silhouette);
    out += ",\"fallback_exhaustive\":";
    out += trace.fallback_exhaustive ? "true" : "false";
    out += ",\"medoids\":[";
    for (std::size_t i = 0; i < trace.medoids.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(trace.medoids[i]);
    }
    out += "],\"medoid_losses\":[";
    for (std::size_t i = 0; i < trace.medoid_losses.size(); ++i) {
      if (i) out += ',';
      out += format_double(trace.medoid_losses[i]);
    }
    out += "],\"shortlist\":[";
    for (std::size_t i = 0; i < trace.shortlist.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(trace.shortlist[i]);
    }
    out += "],\"shortlist_losses\":[";
    for (std::size_t i = 0; i < trace.shortlist_losses.size(); ++i) {
      if (i) out += ',';
      out += format_double(trace.shortlist_losses[i]);
    }
    out += "]}";
  }
  out += ",\"theta_b64\":\"" + base64_encode(pack_f32(theta.values)) + "\"";
  out += "}";
  return out;
}

SelectionResult exhaustive_select(const HypothesisSet& hypotheses,
                                  const LabeledSet& support, LossKind loss,
                                  std::int64_t way) {
  const std::int64_t m = hypotheses.size();
  if (m < 1) throw std::invalid_argument("exhaustive_select: empty hypotheses");
  SelectionResult result;
  result.method = SearchMethod::exhaustive;
  result.evaluations = m;
  double best = std::numeric_limits<double>::infinity();
  std::int64_t best_idx = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double r = eval_support_loss(hypotheses.rows.row(i), support, loss, way);
    if (r < best) {
      best = r;
      best_idx = i;
    }
  }
  result.index = best_idx;
  result.risk = best;
  result.theta = adapter_from_row(hypotheses, best_idx);
  return result;
}

HierarchyIndex build_hierarchy(const Matrix& rows, const HierConfig& config) {
  const std::int64_t m = rows.rows();
  HierarchyIndex index;
  if (m < 2) {
    index.collapsed = true;
    return index;
  }

  // Distinct-row count bounds the usable k.
  std::set<std::vector<double>> distinct;
  for (std::int64_t i = 0; i < m; ++i) {
    const auto row = rows.row(i);
    distinct.emplace(row.begin(), row.end());
    if (static_cast<std::int64_t>(distinct.size()) > config.k_max) break;
  }
  const auto distinct_count = static_cast<std::int64_t>(distinct.size());

  const std::int64_t k_lo = std::max<std::int64_t>(2, config.k_min);
  const std::int64_t k_hi =
      std::min({config.k_max, m - 1, distinct_count});
  if (k_hi < k_lo) {
    index.collapsed = true;
    return index;
  }

  std::vector<std::int64_t> k_grid;
  if (m <= config.full_scan_limit) {
    for (std::int64_t k = k_lo; k <= k_hi; ++k) k_grid.push_back(k);
  } else {
    const double ratio =
        std::pow(static_cast<double>(k_hi) / static_cast<double>(k_lo),
                 1.0 / static_cast<double>(std::max<std::int64_t>(
                           config.grid_points - 1, 1)));
    double v = static_cast<double>(k_lo);
    for (std::int64_t i = 0; i < config.grid_points; ++i) {
      const auto k = static_cast<std::int64_t>(std::llround(v));
      if (k_grid.empty() || k_grid.back() < k) k_grid.push_back(std::min(k, k_hi));
      v *= ratio;
    }
  }

  const Matrix dists = pairwise_distances(rows);
  double best_score = 0.0;
  Clustering best_clustering;
  bool have_best = false;
  for (std::int64_t k : k_grid) {
    Clustering c = kmeans_cluster(rows, k, substream(config.seed, "hier/kmeans",
                                                     static_cast<std::uint64_t>(k)));
    // Guard against collapse with duplicate rows.
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (std::int32_t a : c.assignment) ++counts[a];
    if (std::find(counts.begin(), counts.end(), 0) != counts.end()) continue;
    const double score = silhouette_score_dist(dists, c.assignment, k);
    const double oriented = config.minimize_silhouette ? -score : score;
    if (!have_best || oriented > best_score) {
      best_score = oriented;
      best_clustering = std::move(c);
      have_best = true;
    }
  }
  if (!have_best) {
    index.collapsed = true;
    return index;
  }

  index.chosen_k = best_clustering.k;
  index.silhouette = config.minimize_silhouette ? -best_score : best_score;
  index.clusters.assign(static_cast<std::size_t>(best_clustering.k), {});
  for (std::int64_t i = 0; i < m; ++i)
    index.clusters[best_clustering.assignment[i]].push_back(i);
  index.medoids.reserve(index.clusters.size());
  for (const auto& members : index.clusters)
    index.medoids.push_back(medoid_of(rows, members));
  return index;
}

namespace {

// Loss-evaluation bookkeeping shared by the hierarchical descent.
struct LossEvaluator {
  const HypothesisSet& hypotheses;
  const LabeledSet& support;
  LossKind loss;
  std::int64_t way;
  std::int64_t evaluations = 0;

  double operator()(std::int64_t index) {
    ++evaluations;
    return eval_support_loss(hypotheses.rows.row(index), support, loss, way);
  }
};

}  // namespace

SelectionResult hierarchical_select(const HypothesisSet& hypotheses,
                                    const LabeledSet& support, LossKind loss,
                                    std::int64_t way, const HierConfig& config,
                                    const HierarchyIndex* prebuilt) {
  const std::int64_t m = hypotheses.size();
  if (m < 1) throw std::invalid_argument("hierarchical_select: empty hypotheses");

  LossEvaluator evaluate{hypotheses, support, loss, way};
  SelectionResult result;
  result.method = SearchMethod::hierarchical;

  // Working candidate pool, narrowed per level.
  std::vector<std::int64_t> pool(static_cast<std::size_t>(m));
  std::iota(pool.begin(), pool.end(), 0);

  for (std::int64_t level = 0; level < config.depth; ++level) {
    if (static_cast<std::int64_t>(pool.size()) < 2) break;

    HierarchyIndex local;
    const HierarchyIndex* index = nullptr;
    if (level == 0 && prebuilt) {
      index = prebuilt;
    } else {
      Matrix sub(static_cast<std::int64_t>(pool.size()), hypotheses.dim());
      for (std::size_t i = 0; i < pool.size(); ++i)
        std::copy(hypotheses.rows.row(pool[i]).begin(),
                  hypotheses.rows.row(pool[i]).end(),
                  sub.row(static_cast<std::int64_t>(i)).begin());
      HierConfig sub_cfg = config;
      sub_cfg.seed = substream(config.seed, "hier/level", level);
      local = build_hierarchy(sub, sub_cfg);
      // Map subset-local indices back to pool indices.
      for (auto& cluster : local.clusters)
        for (auto& idx : cluster) idx = pool[static_cast<std::size_t>(idx)];
      for (auto& idx : local.medoids) idx = pool[static_cast<std::size_t>(idx)];
      index = &local;
    }

    if (index->collapsed) {
      result.trace.fallback_exhaustive = true;
      break;
    }
    if (level == 0) {
      result.trace.chosen_k = index->chosen_k;
      result.trace.silhouette = index->silhouette;
    }

    // Evaluate medoids; descend into the best medoid's cluster.
    std::int64_t best_cluster = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < index->medoids.size(); ++c) {
      const double r = evaluate(index->medoids[c]);
      if (level == 0) {
        result.trace.medoids.push_back(index->medoids[c]);
        result.trace.medoid_losses.push_back(r);
      }
      if (r < best_loss) {
        best_loss = r;
        best_cluster = static_cast<std::int64_t>(c);
      }
    }
    pool = index->clusters[static_cast<std::size_t>(best_cluster)];
  }

  if (result.trace.fallback_exhaustive) {
    pool.assign(static_cast<std::size_t>(m), 0);
    std::iota(pool.begin(), pool.end(), 0);
    std::fprintf(stderr,
                 "hierarchical_select: cluster collapse, falling back to "
                 "exhaustive scan over %lld candidates\n",
                 static_cast<long long>(m));
  }

  // Evaluate every member of the final pool, shortlist, return the minimizer.
  std::vector<std::pair<double, std::int64_t>> scored;
  scored.reserve(pool.size());
  for (std::int64_t idx : pool) scored.emplace_back(evaluate(idx), idx);
  std::sort(scored.begin(), scored.end());
  const auto shortlist_size = static_cast<std::size_t>(
      std::min<std::int64_t>(config.shortlist,
                             static_cast<std::int64_t>(scored.size())));

  result.index = scored.front().second;
  result.risk = scored.front().first;
  for (std::size_t i = 0; i < shortlist_size; ++i) {
    result.trace.shortlist.push_back(scored[i].second);
    result.trace.shortlist_losses.push_back(scored[i].first);
  }
  result.evaluations = evaluate.evaluations;
  result.theta = adapter_from_row(hypotheses, result.index);
  return result;
}

}  // namespace steel
