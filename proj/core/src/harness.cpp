#include "steel/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "steel/checkpoint_io.hpp"
#include "steel/hash.hpp"
#include "steel/rng.hpp"
#include "steel/serialize.hpp"
#include "steel/stzo_io.hpp"

namespace steel {

namespace fs = std::filesystem;

AdapterVector train_sgd_baseline(const LabeledSet& support, std::int64_t way,
                                 const SgdBaselineConfig& config) {
  if (support.size() == 0)
    throw std::invalid_argument("sgd baseline: empty support");
  const std::int64_t d_feat = support.features.cols();
  const std::int64_t dim = way * d_feat + way;
  const std::int64_t n = support.size();

  AdapterVector adapter;
  adapter.provenance = Provenance::trained;
  adapter.values.assign(static_cast<std::size_t>(dim), 0.0);
  std::vector<double> velocity(static_cast<std::size_t>(dim), 0.0);
  std::vector<double> grad(static_cast<std::size_t>(dim));
  std::vector<double> probs(static_cast<std::size_t>(way));
  std::vector<double> last_finite = adapter.values;

  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const auto x = support.features.row(i);
      head_softmax(adapter.values, x, way, probs);
      const std::int32_t y = support.labels[i];
      loss -= std::log(std::max(probs[y], 1e-300));
      for (std::int64_t c = 0; c < way; ++c) {
        const double delta = probs[c] - (c == y ? 1.0 : 0.0);
        axpy(delta, x, std::span<double>(grad).subspan(c * d_feat, d_feat));
        grad[way * d_feat + c] += delta;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (!std::isfinite(loss))
      throw TrainingFailure("sgd baseline: loss diverged", last_finite);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      velocity[i] = config.momentum * velocity[i] - config.lr * inv_n * grad[i];
      adapter.values[i] += velocity[i];
    }
    if (all_finite(adapter.values)) last_finite = adapter.values;
  }
  if (!all_finite(adapter.values))
    throw TrainingFailure("sgd baseline: parameters diverged", last_finite);
  return adapter;
}

// ---------------------------------------------------------------------------
// Config JSON round trip.
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json dist_to_json(const TaskDistributionConfig& d) {
  return {{"input_dim", d.input_dim},
          {"way", d.way},
          {"angle_min", d.angle_min},
          {"angle_max", d.angle_max},
          {"mean_radius", d.mean_radius},
          {"noise_scale", d.noise_scale},
          {"feature_dim", d.feature_dim},
          {"backbone_seed", d.backbone_seed},
          {"projection_scale", d.projection_scale},
          {"label_noise", d.label_noise}};
}

TaskDistributionConfig dist_from_json(const nlohmann::json& j) {
  TaskDistributionConfig d;
  d.input_dim = j.value("input_dim", d.input_dim);
  d.way = j.value("way", d.way);
  d.angle_min = j.value("angle_min", d.angle_min);
  d.angle_max = j.value("angle_max", d.angle_max);
  d.mean_radius = j.value("mean_radius", d.mean_radius);
  d.noise_scale = j.value("noise_scale", d.noise_scale);
  d.feature_dim = j.value("feature_dim", d.feature_dim);
  d.backbone_seed = j.value("backbone_seed", d.backbone_seed);
  d.projection_scale = j.value("projection_scale", d.projection_scale);
  d.label_noise = j.value("label_noise", d.label_noise);
  return d;
}

nlohmann::ordered_json opt_to_json(const OptimizerConfig& o) {
  return {{"kind", o.kind == OptimizerKind::lamb ? "lamb" : "adam"},
          {"lr", o.lr},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"eps", o.eps},
          {"weight_decay", o.weight_decay},
          {"trust_clip", o.trust_clip}};
}

OptimizerConfig opt_from_json(const nlohmann::json& j, OptimizerConfig o) {
  const std::string kind = j.value("kind", std::string(
      o.kind == OptimizerKind::lamb ? "lamb" : "adam"));
  if (kind == "lamb")
    o.kind = OptimizerKind::lamb;
  else if (kind == "adam")
    o.kind = OptimizerKind::adam;
  else
    throw ConfigError("unknown optimizer kind: " + kind);
  o.lr = j.value("lr", o.lr);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.eps = j.value("eps", o.eps);
  o.weight_decay = j.value("weight_decay", o.weight_decay);
  o.trust_clip = j.value("trust_clip", o.trust_clip);
  return o;
}

}  // namespace

std::string BenchmarkConfig::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["master_seed"] = master_seed;
  j["out_dir"] = out_dir;
  j["dist"] = dist_to_json(dist);
  j["zoo"] = {{"tasks", zoo_tasks},
              {"shots", zoo.shots},
              {"train_epochs", zoo.train.epochs},
              {"train_opt", opt_to_json(zoo.train.opt)}};
  j["diffusion"] = {{"timesteps", diffusion.timesteps},
                    {"beta_min", diffusion.beta_min},
                    {"beta_max", diffusion.beta_max},
                    {"epochs", diffusion.epochs},
                    {"stage2_epochs", diffusion.stage2_epochs},
                    {"batch_size", diffusion.batch_size},
                    {"ema_decay", diffusion.ema_decay},
                    {"sampler_variance",
                     diffusion.sampler_variance == SamplerVariance::beta
                         ? "beta"
                         : "beta_tilde"},
                    {"round_hidden_to_512", diffusion.denoiser.round_hidden_to_512},
                    {"hidden_override", diffusion.denoiser.hidden_override},
                    {"opt", opt_to_json(diffusion.opt)}};
  j["samples"] = samples;
  j["methods"] = methods;
  j["search"] = search == SearchMethod::exhaustive ? "exhaustive" : "hier";
  j["hier"] = {{"k_min", hier.k_min},
               {"k_max", hier.k_max},
               {"minimize_silhouette", hier.minimize_silhouette},
               {"shortlist", hier.shortlist},
               {"depth", hier.depth}};
  j["shots"] = shots;
  j["episodes_per_shot"] = episodes_per_shot;
  j["query_per_class"] = query_per_class;
  j["epsilon"] = epsilon;
  j["loss"] = loss_name(loss);
  j["sgd"] = {{"feature_dim", sgd.feature_dim},
              {"lr", sgd.lr},
              {"momentum", sgd.momentum},
              {"epochs", sgd.epochs},
              {"bound_best_case", sgd.bound_best_case},
              {"codec_levels", sgd.codec.levels}};
  j["vanilla"] = {{"opt_steps", vanilla.opt_steps},
                  {"opt_lr", vanilla.opt_lr},
                  {"train_mc", vanilla.train_mc},
                  {"mc_samples", vanilla.mc_samples},
                  {"sigma_init", vanilla.sigma_init},
                  {"prior_scale", vanilla.prior_scale}};
  return j.dump(2);
}

BenchmarkConfig BenchmarkConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  BenchmarkConfig c;
  try {
    if (!j.contains("version")) throw ConfigError("config: missing version");
    c.version = j.at("version").get<int>();
    if (c.version != 1)
      throw ConfigError("config: unsupported version " +
                        std::to_string(c.version));
    c.master_seed = j.value("master_seed", c.master_seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("dist")) c.dist = dist_from_json(j.at("dist"));
    if (j.contains("zoo")) {
      const auto& z = j.at("zoo");
      c.zoo_tasks = z.value("tasks", c.zoo_tasks);
      c.zoo.shots = z.value("shots", c.zoo.shots);
      c.zoo.train.epochs = z.value("train_epochs", c.zoo.train.epochs);
      if (z.contains("train_opt"))
        c.zoo.train.opt = opt_from_json(z.at("train_opt"), c.zoo.train.opt);
    }
    if (j.contains("diffusion")) {
      const auto& d = j.at("diffusion");
      c.diffusion.timesteps = d.value("timesteps", c.diffusion.timesteps);
      c.diffusion.beta_min = d.value("beta_min", c.diffusion.beta_min);
      c.diffusion.beta_max = d.value("beta_max", c.diffusion.beta_max);
      c.diffusion.epochs = d.value("epochs", c.diffusion.epochs);
      c.diffusion.stage2_epochs =
          d.value("stage2_epochs", c.diffusion.stage2_epochs);
      c.diffusion.batch_size = d.value("batch_size", c.diffusion.batch_size);
      c.diffusion.ema_decay = d.value("ema_decay", c.diffusion.ema_decay);
      const std::string var = d.value("sampler_variance", std::string("beta"));
      if (var == "beta")
        c.diffusion.sampler_variance = SamplerVariance::beta;
      else if (var == "beta_tilde")
        c.diffusion.sampler_variance = SamplerVariance::beta_tilde;
      else
        throw ConfigError("config: unknown sampler_variance " + var);
      c.diffusion.denoiser.round_hidden_to_512 =
          d.value("round_hidden_to_512", c.diffusion.denoiser.round_hidden_to_512);
      c.diffusion.denoiser.hidden_override =
          d.value("hidden_override", c.diffusion.denoiser.hidden_override);
      if (d.contains("opt"))
        c.diffusion.opt = opt_from_json(d.at("opt"), c.diffusion.opt);
    }
    c.samples = j.value("samples", c.samples);
    if (j.contains("methods"))
      c.methods = j.at("methods").get<std::vector<std::string>>();
    const std::string search = j.value("search", std::string("exhaustive"));
    if (search == "exhaustive")
      c.search = SearchMethod::exhaustive;
    else if (search == "hier")
      c.search = SearchMethod::hierarchical;
    else
      throw ConfigError("config: unknown search " + search);
    if (j.contains("hier")) {
      const auto& h = j.at("hier");
      c.hier.k_min = h.value("k_min", c.hier.k_min);
      c.hier.k_max = h.value("k_max", c.hier.k_max);
      c.hier.minimize_silhouette =
          h.value("minimize_silhouette", c.hier.minimize_silhouette);
      c.hier.shortlist = h.value("shortlist", c.hier.shortlist);
      c.hier.depth = h.value("depth", c.hier.depth);
    }
    if (j.contains("shots"))
      c.shots = j.at("shots").get<std::vector<std::int64_t>>();
    c.episodes_per_shot = j.value("episodes_per_shot", c.episodes_per_shot);
    c.query_per_class = j.value("query_per_class", c.query_per_class);
    c.epsilon = j.value("epsilon", c.epsilon);
    if (j.contains("loss")) c.loss = loss_from_name(j.at("loss").get<std::string>());
    if (j.contains("sgd")) {
      const auto& s = j.at("sgd");
      c.sgd.feature_dim = s.value("feature_dim", c.sgd.feature_dim);
      c.sgd.lr = s.value("lr", c.sgd.lr);
      c.sgd.momentum = s.value("momentum", c.sgd.momentum);
      c.sgd.epochs = s.value("epochs", c.sgd.epochs);
      c.sgd.bound_best_case = s.value("bound_best_case", c.sgd.bound_best_case);
      c.sgd.codec.levels = s.value("codec_levels", c.sgd.codec.levels);
    }
    if (j.contains("vanilla")) {
      const auto& v = j.at("vanilla");
      c.vanilla.opt_steps = v.value("opt_steps", c.vanilla.opt_steps);
      c.vanilla.opt_lr = v.value("opt_lr", c.vanilla.opt_lr);
      c.vanilla.train_mc = v.value("train_mc", c.vanilla.train_mc);
      c.vanilla.mc_samples = v.value("mc_samples", c.vanilla.mc_samples);
      c.vanilla.sigma_init = v.value("sigma_init", c.vanilla.sigma_init);
      c.vanilla.prior_scale = v.value("prior_scale", c.vanilla.prior_scale);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  return c;
}

BenchmarkConfig BenchmarkConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

void BenchmarkConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config: " + path);
  out << to_json() << '\n';
}

// ---------------------------------------------------------------------------
// Episode results.
// ---------------------------------------------------------------------------

std::string EpisodeResult::to_json() const {
  std::string out = "{\"episode\":" + std::to_string(episode_index);
  out += ",\"shots\":" + std::to_string(shots);
  out += ",\"way\":" + std::to_string(way);
  out += ",\"seed\":" + std::to_string(seed);
  out += ",\"hyp_hash\":\"" + hyp_hash + "\"";
  out += ",\"methods\":[";
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const MethodResult& m = methods[i];
    if (i) out += ',';
    out += "{\"method\":\"" + m.method + "\"";
    if (m.has_selection) out += ",\"selection\":" + m.selection.to_json();
    out += ",\"certificate\":" + m.certificate.to_json();
    out += ",\"query_risk\":" + format_double(m.query_risk);
    out += ",\"query_accuracy\":" + format_double(m.query_accuracy);
    out += "}";
  }
  out += "]}";
  return out;
}

EpisodeResult EpisodeResult::from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("episode result parse error: ") + e.what());
  }
  EpisodeResult result;
  try {
    result.episode_index = j.at("episode").get<std::int64_t>();
    result.shots = j.at("shots").get<std::int64_t>();
    result.way = j.at("way").get<std::int64_t>();
    result.seed = j.at("seed").get<std::uint64_t>();
    result.hyp_hash = j.at("hyp_hash").get<std::string>();
    for (const auto& mj : j.at("methods")) {
      MethodResult m;
      m.method = mj.at("method").get<std::string>();
      if (mj.contains("selection")) {
        m.has_selection = true;
        const auto& sel = mj.at("selection");
        m.selection.index = sel.at("selected_index").get<std::int64_t>();
        m.selection.risk = sel.at("risk").get<double>();
        m.selection.evaluations = sel.at("evaluations").get<std::int64_t>();
        m.selection.method = sel.at("search").get<std::string>() == "exhaustive"
                                 ? SearchMethod::exhaustive
                                 : SearchMethod::hierarchical;
      }
      const auto& cj = mj.at("certificate");
      m.certificate.empirical_risk = cj.at("r").get<double>();
      m.certificate.complexity = cj.at("complexity").get<double>();
      m.certificate.bound = cj.at("bound").get<double>();
      m.certificate.n = cj.at("n").get<std::int64_t>();
      m.certificate.epsilon = cj.at("epsilon").get<double>();
      m.certificate.max_loss = cj.at("C").get<double>();
      if (cj.contains("M"))
        m.certificate.hypothesis_count = cj.at("M").get<std::int64_t>();
      if (cj.contains("K")) m.certificate.code_bits = cj.at("K").get<std::int64_t>();
      if (cj.contains("KL")) m.certificate.kl = cj.at("KL").get<double>();
      m.certificate.loss = cj.at("loss_name").get<std::string>();
      const std::string family = cj.at("family").get<std::string>();
      if (family == "finite-hypothesis")
        m.certificate.family = BoundFamily::finite_hypothesis;
      else if (family == "quantization")
        m.certificate.family = BoundFamily::quantization;
      else if (family == "vanilla-pac-bayes")
        m.certificate.family = BoundFamily::vanilla_pac_bayes;
      else
        throw FormatError("unknown certificate family: " + family);
      m.query_risk = mj.at("query_risk").get<double>();
      m.query_accuracy = mj.at("query_accuracy").get<double>();
      result.methods.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("episode result field error: ") + e.what());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Artifacts.
// ---------------------------------------------------------------------------

const HypothesisSet* BenchmarkArtifacts::find_set(Strategy s) const {
  for (const auto& [strategy, set] : sets)
    if (strategy == s) return &set;
  return nullptr;
}

const HierarchyIndex* BenchmarkArtifacts::find_hierarchy(Strategy s) const {
  for (const auto& [strategy, index] : hierarchies)
    if (strategy == s) return &index;
  return nullptr;
}

namespace {

bool method_enabled(const BenchmarkConfig& config, std::string_view name) {
  return std::find(config.methods.begin(), config.methods.end(), name) !=
         config.methods.end();
}

}  // namespace

BenchmarkArtifacts prepare_artifacts(const BenchmarkConfig& config) {
  fs::create_directories(config.out_dir);
  const std::string zoo_path = config.out_dir + "/zoo.stzo";
  const std::string ckpt_path = config.out_dir + "/diffusion.stdf";

  BenchmarkArtifacts artifacts;
  ModelZoo built = build_zoo(config.dist, config.zoo_tasks, config.zoo,
                             substream(config.master_seed, "harness/zoo"));
  save_zoo(built, zoo_path);
  artifacts.zoo = load_zoo(zoo_path);
  const std::string zoo_hash = hash_file_hex(zoo_path);

  const bool need_diffusion =
      method_enabled(config, "steel") || method_enabled(config, "union");
  if (need_diffusion) {
    DiffusionTrainConfig dcfg = config.diffusion;
    dcfg.denoiser.dim = artifacts.zoo.dim();
    dcfg.seed = substream(config.master_seed, "harness/diffusion");
    DiffusionCheckpoint trained = train_diffusion(artifacts.zoo, dcfg);
    trained.metadata.zoo_hash = zoo_hash;
    save_checkpoint(trained, ckpt_path);
    artifacts.checkpoint = load_checkpoint(ckpt_path);
    artifacts.has_checkpoint = true;
  }

  HypothesisSet steel_set;
  if (need_diffusion) {
    steel_set = sample_params(artifacts.checkpoint, config.samples,
                              substream(config.master_seed, "harness/samples"));
    const std::string path = config.out_dir + "/hyp-steel.stzo";
    save_hypothesis_set(steel_set, path);
    steel_set = load_hypothesis_set(path);
  }
  if (method_enabled(config, "steel"))
    artifacts.sets.emplace_back(Strategy::steel, steel_set);
  if (method_enabled(config, "model-zoo")) {
    HypothesisSet zoo_set = hypothesis_set_from_zoo(artifacts.zoo);
    const std::string path = config.out_dir + "/hyp-zoo.stzo";
    save_hypothesis_set(zoo_set, path);
    artifacts.sets.emplace_back(Strategy::model_zoo, load_hypothesis_set(path));
  }
  if (method_enabled(config, "union")) {
    HypothesisSet u = union_of(artifacts.zoo, steel_set);
    const std::string path = config.out_dir + "/hyp-union.stzo";
    save_hypothesis_set(u, path);
    artifacts.sets.emplace_back(Strategy::unioned, load_hypothesis_set(path));
  }

  if (config.search == SearchMethod::hierarchical) {
    for (const auto& [strategy, set] : artifacts.sets) {
      HierConfig hcfg = config.hier;
      hcfg.seed = substream(config.master_seed, "harness/hier");
      artifacts.hierarchies.emplace_back(strategy,
                                         build_hierarchy(set.rows, hcfg));
    }
  }

  artifacts.baseline_backbone =
      make_backbone(config.dist, config.sgd.feature_dim,
                    substream(config.dist.backbone_seed, "baseline"));

  ByteHasher combined;
  combined.update(zoo_hash);
  for (const auto& [strategy, set] : artifacts.sets) {
    combined.update(strategy_name(strategy));
    combined.update(set.hash);
  }
  artifacts.combined_hash = combined.hex();
  return artifacts;
}

// ---------------------------------------------------------------------------
// Episodes.
// ---------------------------------------------------------------------------

double vacuous_threshold(LossKind loss, std::int64_t way, double max_loss) {
  if (loss == LossKind::zero_one)
    return 1.0 - 1.0 / static_cast<double>(way);
  return max_loss;
}

EpisodeResult run_episode(const BenchmarkConfig& config,
                          const BenchmarkArtifacts& artifacts,
                          std::int64_t shots, std::int64_t episode_index) {
  const std::uint64_t ep_seed =
      substream(config.master_seed, "harness/episode",
                static_cast<std::uint64_t>(episode_index));
  const TaskSpec task =
      sample_task(config.dist, substream(ep_seed, "task"), episode_index);
  const Episode episode =
      sample_episode(config.dist, task, shots, config.query_per_class,
                     substream(ep_seed, "episode"));
  const std::int64_t n = episode.support.size();
  const std::int64_t way = config.dist.way;
  const double max_loss = loss_max(config.loss);

  EpisodeResult result;
  result.episode_index = episode_index;
  result.shots = shots;
  result.way = way;
  result.seed = ep_seed;
  result.hyp_hash = artifacts.combined_hash;

  for (const std::string& name : config.methods) {
    const auto t0 = std::chrono::steady_clock::now();
    MethodResult m;
    m.method = name;
    if (name == "steel" || name == "model-zoo" || name == "union") {
      const Strategy strategy = strategy_from_name(name);
      const HypothesisSet* set = artifacts.find_set(strategy);
      if (!set)
        throw ConfigError("missing hypothesis set for method " + name);
      m.has_selection = true;
      if (config.search == SearchMethod::exhaustive) {
        m.selection = exhaustive_select(*set, episode.support, config.loss, way);
      } else {
        m.selection =
            hierarchical_select(*set, episode.support, config.loss, way,
                                config.hier, artifacts.find_hierarchy(strategy));
      }
      m.certificate = finite_hypothesis_certificate(
          m.selection.risk, set->size(), n, config.epsilon, max_loss);
      m.certificate.loss = loss_name(config.loss);
      m.certificate.seed = ep_seed;
      m.query_risk = eval_support_loss(m.selection.theta.values, episode.query,
                                       config.loss, way);
      m.query_accuracy =
          1.0 - head_error(m.selection.theta.values, episode.query, way);
    } else if (name == "sgd-baseline") {
      LabeledSet bsupport;
      bsupport.raw = episode.support.raw;
      bsupport.labels = episode.support.labels;
      bsupport.features =
          featurize_batch(artifacts.baseline_backbone, episode.support.raw);
      LabeledSet bquery;
      bquery.raw = episode.query.raw;
      bquery.labels = episode.query.labels;
      bquery.features =
          featurize_batch(artifacts.baseline_backbone, episode.query.raw);

      const AdapterVector theta = train_sgd_baseline(bsupport, way, config.sgd);
      const double r = eval_support_loss(theta.values, bsupport, config.loss, way);
      std::int64_t code_bits;
      if (config.sgd.bound_best_case) {
        code_bits = theta.dim();
      } else {
        QuantizationCodecConfig codec = config.sgd.codec;
        codec.seed = substream(ep_seed, "codec");
        code_bits = quantization_complexity(theta.values, codec);
      }
      m.certificate =
          quantization_certificate(r, code_bits, n, config.epsilon, max_loss);
      m.certificate.loss = loss_name(config.loss);
      m.certificate.seed = ep_seed;
      m.query_risk = eval_support_loss(theta.values, bquery, config.loss, way);
      m.query_accuracy = 1.0 - head_error(theta.values, bquery, way);
    } else if (name == "vanilla-pb") {
      VanillaPbConfig vcfg = config.vanilla;
      vcfg.certify_loss = config.loss;
      vcfg.seed = substream(ep_seed, "vanilla");
      GaussianPosterior posterior;
      m.certificate = vanilla_pacbayes_certificate(posterior, episode.support,
                                                   way, config.epsilon, vcfg);
      m.query_risk =
          posterior_set_risk(posterior, episode.query, way, config.loss,
                             vcfg.mc_samples, substream(ep_seed, "vanilla-q"));
      m.query_accuracy = 1.0 - posterior_set_risk(
                                   posterior, episode.query, way,
                                   LossKind::zero_one, vcfg.mc_samples,
                                   substream(ep_seed, "vanilla-q"));
    } else {
      throw ConfigError("unknown method: " + name);
    }
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.methods.push_back(std::move(m));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation.
// ---------------------------------------------------------------------------

namespace {

double median_of_sorted(const std::vector<double>& sorted) {
  const std::size_t n = sorted.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return sorted[n / 2];
  return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

}  // namespace

const MethodAggregate* AggregateStats::find(std::string_view method) const {
  for (const auto& m : per_method)
    if (m.method == method) return &m;
  return nullptr;
}

AggregateStats aggregate_for_shots(const std::vector<EpisodeResult>& results,
                                   std::int64_t shots, LossKind loss,
                                   std::int64_t way, double max_loss) {
  if (results.empty())
    throw std::invalid_argument("aggregate: empty result list");
  const double threshold = vacuous_threshold(loss, way, max_loss);

  std::vector<std::string> order;
  AggregateStats stats;
  for (const EpisodeResult& ep : results) {
    if (shots >= 0 && ep.shots != shots) continue;
    for (const MethodResult& m : ep.methods)
      if (std::find(order.begin(), order.end(), m.method) == order.end())
        order.push_back(m.method);
  }
  for (const std::string& method : order) {
    std::vector<double> bounds, gaps;
    double acc_sum = 0.0, support_sum = 0.0, query_sum = 0.0;
    std::int64_t count = 0;
    for (const EpisodeResult& ep : results) {
      if (shots >= 0 && ep.shots != shots) continue;
      for (const MethodResult& m : ep.methods) {
        if (m.method != method) continue;
        bounds.push_back(m.certificate.bound);
        gaps.push_back(m.certificate.bound - m.query_risk);
        acc_sum += m.query_accuracy;
        support_sum += m.certificate.empirical_risk;
        query_sum += m.query_risk;
        ++count;
      }
    }
    if (count == 0) continue;
    std::sort(bounds.begin(), bounds.end());
    std::sort(gaps.begin(), gaps.end());
    MethodAggregate agg;
    agg.method = method;
    agg.episodes = count;
    std::int64_t non_vacuous = 0;
    for (double b : bounds)
      if (b < threshold) ++non_vacuous;
    agg.pct_non_vacuous =
        100.0 * static_cast<double>(non_vacuous) / static_cast<double>(count);
    agg.median_gap = median_of_sorted(gaps);
    agg.min_bound = bounds.front();
    agg.median_bound = median_of_sorted(bounds);
    agg.max_bound = bounds.back();
    agg.mean_query_accuracy = acc_sum / static_cast<double>(count);
    agg.mean_support_risk = support_sum / static_cast<double>(count);
    agg.mean_query_risk = query_sum / static_cast<double>(count);
    stats.per_method.push_back(std::move(agg));
  }
  if (stats.per_method.empty())
    throw std::invalid_argument("aggregate: no matching records");
  return stats;
}

AggregateStats aggregate(const std::vector<EpisodeResult>& results,
                         LossKind loss, std::int64_t way, double max_loss) {
  return aggregate_for_shots(results, -1, loss, way, max_loss);
}

// ---------------------------------------------------------------------------
// Benchmark driver.
// ---------------------------------------------------------------------------

namespace {

void write_aggregate_csv(std::ostream& out, const BenchmarkConfig& config,
                         const std::vector<EpisodeResult>& results) {
  out << "method,shots,episodes,pct_non_vacuous,median_gap,min_bound,"
         "median_bound,max_bound,mean_query_accuracy,mean_support_risk,"
         "mean_query_risk\n";
  auto emit = [&](const AggregateStats& stats, const std::string& shots) {
    for (const MethodAggregate& m : stats.per_method) {
      out << m.method << ',' << shots << ',' << m.episodes << ','
          << format_double(m.pct_non_vacuous) << ','
          << format_double(m.median_gap) << ',' << format_double(m.min_bound)
          << ',' << format_double(m.median_bound) << ','
          << format_double(m.max_bound) << ','
          << format_double(m.mean_query_accuracy) << ','
          << format_double(m.mean_support_risk) << ','
          << format_double(m.mean_query_risk) << '\n';
    }
  };
  for (std::int64_t s : config.shots)
    emit(aggregate_for_shots(results, s, config.loss, config.dist.way,
                             loss_max(config.loss)),
         std::to_string(s));
  emit(aggregate(results, config.loss, config.dist.way, loss_max(config.loss)),
       "all");
}

void write_bound_vs_shots_csv(std::ostream& out, const BenchmarkConfig& config,
                              const std::vector<EpisodeResult>& results) {
  out << "shots,method,min_bound,median_bound,max_bound,mean_support_risk,"
         "mean_query_risk,pct_non_vacuous\n";
  for (std::int64_t s : config.shots) {
    const AggregateStats stats = aggregate_for_shots(
        results, s, config.loss, config.dist.way, loss_max(config.loss));
    for (const MethodAggregate& m : stats.per_method) {
      out << s << ',' << m.method << ',' << format_double(m.min_bound) << ','
          << format_double(m.median_bound) << ',' << format_double(m.max_bound)
          << ',' << format_double(m.mean_support_risk) << ','
          << format_double(m.mean_query_risk) << ','
          << format_double(m.pct_non_vacuous) << '\n';
    }
  }
}

}  // namespace

BenchmarkOutput run_benchmark(const BenchmarkConfig& config) {
  if (config.episodes_per_shot < 1)
    throw ConfigError("benchmark: episodes_per_shot must be >= 1");
  const BenchmarkArtifacts artifacts = prepare_artifacts(config);

  const auto n_shots = static_cast<std::int64_t>(config.shots.size());
  const std::int64_t total = n_shots * config.episodes_per_shot;
  std::vector<EpisodeResult> results(static_cast<std::size_t>(total));
  std::vector<std::string> errors(static_cast<std::size_t>(total));

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t g = 0; g < total; ++g) {
    const std::int64_t shot = config.shots[static_cast<std::size_t>(
        g / config.episodes_per_shot)];
    try {
      results[static_cast<std::size_t>(g)] =
          run_episode(config, artifacts, shot, g);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(g)] = e.what();
    }
  }

  std::vector<EpisodeResult> completed;
  completed.reserve(results.size());
  std::ofstream log(config.out_dir + "/episode-errors.log", std::ios::trunc);
  std::int64_t failed = 0;
  for (std::int64_t g = 0; g < total; ++g) {
    if (errors[static_cast<std::size_t>(g)].empty()) {
      completed.push_back(std::move(results[static_cast<std::size_t>(g)]));
    } else {
      ++failed;
      log << "episode " << g << ": " << errors[static_cast<std::size_t>(g)]
          << '\n';
    }
  }
  if (completed.empty())
    throw NumericError("benchmark: every episode failed; see episode-errors.log");
  if (failed > 0)
    std::fprintf(stderr, "benchmark: %lld episode(s) failed, see %s\n",
                 static_cast<long long>(failed),
                 (config.out_dir + "/episode-errors.log").c_str());

  BenchmarkOutput output;
  output.results_path = config.out_dir + "/results.jsonl";
  {
    std::ofstream out(output.results_path, std::ios::trunc);
    for (const EpisodeResult& ep : completed) out << ep.to_json() << '\n';
  }
  {
    // Wall-clock timings stay outside results.jsonl so reruns stay
    // byte-identical.
    std::ofstream out(config.out_dir + "/timings.csv", std::ios::trunc);
    out << "episode,shots,method,seconds\n";
    for (const EpisodeResult& ep : completed)
      for (const MethodResult& m : ep.methods)
        out << ep.episode_index << ',' << ep.shots << ',' << m.method << ','
            << format_double(m.wall_seconds) << '\n';
  }
  {
    std::ofstream out(config.out_dir + "/aggregates.csv", std::ios::trunc);
    write_aggregate_csv(out, config, completed);
  }
  {
    std::ofstream out(config.out_dir + "/bound_vs_shots.csv", std::ios::trunc);
    write_bound_vs_shots_csv(out, config, completed);
  }

  output.overall = aggregate(completed, config.loss, config.dist.way,
                             loss_max(config.loss));
  output.episodes = std::move(completed);
  return output;
}

// ---------------------------------------------------------------------------
// Learning curve.
// ---------------------------------------------------------------------------

std::vector<CurvePoint> learning_curve_from_losses(
    std::span<const double> losses, std::int64_t n, double epsilon,
    double max_loss, std::int64_t stride) {
  if (stride < 1) throw std::invalid_argument("learning_curve: stride >= 1");
  if (losses.empty())
    throw std::invalid_argument("learning_curve: empty loss list");
  std::vector<CurvePoint> curve;
  double running_min = std::numeric_limits<double>::infinity();
  std::int64_t next_emit = stride;
  const auto total = static_cast<std::int64_t>(losses.size());
  for (std::int64_t i = 0; i < total; ++i) {
    running_min = std::min(running_min, losses[i]);
    const std::int64_t m = i + 1;
    if (m == next_emit || m == total) {
      CurvePoint point;
      point.m = m;
      point.best_risk = running_min;
      point.complexity =
          finite_hypothesis_certificate(0.0, m, n, epsilon, max_loss).complexity;
      point.bound = point.best_risk + point.complexity;
      curve.push_back(point);
      while (next_emit <= m) next_emit += stride;
    }
  }
  return curve;
}

std::vector<CurvePoint> learning_curve(const HypothesisSet& hypotheses,
                                       const LabeledSet& support, LossKind loss,
                                       std::int64_t way, double epsilon,
                                       double max_loss, std::int64_t stride) {
  std::vector<double> losses(static_cast<std::size_t>(hypotheses.size()));
  for (std::int64_t i = 0; i < hypotheses.size(); ++i)
    losses[static_cast<std::size_t>(i)] =
        eval_support_loss(hypotheses.rows.row(i), support, loss, way);
  return learning_curve_from_losses(losses, support.size(), epsilon, max_loss,
                                    stride);
}

}  // namespace steel
