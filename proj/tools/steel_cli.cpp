// Command line front end: upstream training (zoo, diffusion), sampling,
// downstream adaptation, certificates, and the full benchmark pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "steel/bounds.hpp"
#include "steel/checkpoint_io.hpp"
#include "steel/episode_io.hpp"
#include "steel/errors.hpp"
#include "steel/harness.hpp"
#include "steel/hash.hpp"
#include "steel/report.hpp"
#include "steel/rng.hpp"
#include "steel/select.hpp"
#include "steel/serialize.hpp"
#include "steel/stzo_io.hpp"
#include "steel/zoo.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitNumeric = 4;

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

steel::BenchmarkConfig resolve_config(const GlobalArgs& args) {
  steel::BenchmarkConfig config;
  if (!args.config_path.empty())
    config = steel::BenchmarkConfig::load(args.config_path);
  if (args.seed_set) config.master_seed = args.seed;
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  return config;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw steel::ArtifactError("cannot write: " + path);
  out << text << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STEEL: sample-then-evaluate few-shot learning with risk certificates"};
  app.require_subcommand(1);

  GlobalArgs global;
  app.add_option("--config", global.config_path, "JSON config file");
  app.add_option("--out-dir", global.out_dir, "output directory override");
  app.add_option("--seed", global.seed, "master seed override")
      ->each([&](const std::string&) { global.seed_set = true; });

  // gen-tasks
  auto* gen = app.add_subcommand("gen-tasks", "sample episodes to a JSONL file");
  std::int64_t gen_n = 10, gen_shots = 16, gen_query = 20;
  std::string gen_out = "episodes.jsonl";
  gen->add_option("--n", gen_n, "episode count");
  gen->add_option("--shots", gen_shots, "support shots per class");
  gen->add_option("--query", gen_query, "query examples per class");
  gen->add_option("--out", gen_out, "output JSONL path");

  // train-zoo
  auto* tz = app.add_subcommand("train-zoo", "train one adapter per task");
  std::int64_t tz_n = -1;
  std::string tz_out = "zoo.stzo";
  tz->add_option("--n", tz_n, "task count (defaults to config zoo.tasks)");
  tz->add_option("--out", tz_out, "output zoo path");

  // train-diffusion
  auto* td = app.add_subcommand("train-diffusion", "fit the parameter diffusion model");
  std::string td_zoo = "zoo.stzo", td_out = "ckpt.stdf";
  std::int64_t td_epochs = -1, td_stage2 = -1;
  td->add_option("--zoo", td_zoo, "input zoo path")->required();
  td->add_option("--out", td_out, "output checkpoint path");
  td->add_option("--epochs", td_epochs, "override training epochs");
  td->add_option("--stage2-epochs", td_stage2, "override one-cycle stage epochs");

  // sample
  auto* sm = app.add_subcommand("sample", "draw a hypothesis set from a checkpoint");
  std::string sm_ckpt = "ckpt.stdf", sm_out = "hyp.stzo";
  std::int64_t sm_m = 2000;
  std::uint64_t sm_seed = 7;
  sm->add_option("--ckpt", sm_ckpt, "checkpoint path")->required();
  sm->add_option("--m", sm_m, "sample count");
  sm->add_option("--seed", sm_seed, "sampling seed");
  sm->add_option("--out", sm_out, "output hypothesis set path");

  // adapt
  auto* ad = app.add_subcommand("adapt", "evaluate-then-select on an episode");
  std::string ad_hyp, ad_episode, ad_out = "sel.json", ad_search = "exhaustive";
  std::string ad_curve;
  std::int64_t ad_line = 0, ad_stride = 0;
  ad->add_option("--hyp", ad_hyp, "hypothesis set path")->required();
  ad->add_option("--episode", ad_episode, "episode JSONL path")->required();
  ad->add_option("--line", ad_line, "episode line index");
  ad->add_option("--search", ad_search, "exhaustive|hier");
  ad->add_option("--out", ad_out, "selection JSON output");
  ad->add_option("--curve-out", ad_curve, "optional learning-curve CSV output");
  ad->add_option("--curve-stride", ad_stride, "learning-curve stride (default M/50)");

  // certify
  auto* ce = app.add_subcommand("certify", "compute a risk certificate");
  std::string ce_family = "finite", ce_out, ce_adapter;
  double ce_r = 0.0, ce_eps = 0.05, ce_C = 1.0;
  std::int64_t ce_n = 0, ce_m = 0, ce_k = 0, ce_levels = 16, ce_row = 0;
  ce->add_option("--family", ce_family, "finite|quant");
  ce->add_option("--r", ce_r, "empirical risk")->required();
  ce->add_option("--n", ce_n, "support size")->required();
  ce->add_option("--eps", ce_eps, "failure probability");
  ce->add_option("--C", ce_C, "maximal loss value");
  ce->add_option("--m", ce_m, "hypothesis count (finite family)");
  ce->add_option("--k-bits", ce_k, "code length in bits (quant family)");
  ce->add_option("--adapter", ce_adapter, "STZO file; codes a row to get K");
  ce->add_option("--row", ce_row, "row index within --adapter");
  ce->add_option("--levels", ce_levels, "codebook size for --adapter");
  ce->add_option("--out", ce_out, "certificate JSON output");

  // bench
  auto* be = app.add_subcommand("bench", "run the full benchmark pipeline");
  std::string be_write_config;
  be->add_option("--write-default-config", be_write_config,
                 "write the default config JSON and exit");

  // report
  auto* re = app.add_subcommand("report", "summarize benchmark results");
  std::string re_results, re_out;
  re->add_option("--results", re_results, "results directory")->required();
  re->add_option("--out", re_out, "output directory (defaults to results dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const steel::BenchmarkConfig config = resolve_config(global);
      std::ofstream out(gen_out, std::ios::trunc);
      if (!out) throw steel::ArtifactError("cannot write: " + gen_out);
      for (std::int64_t i = 0; i < gen_n; ++i) {
        const std::uint64_t seed =
            steel::substream(config.master_seed, "cli/gen-tasks", i);
        const steel::TaskSpec task =
            steel::sample_task(config.dist, steel::substream(seed, "task"), i);
        const steel::Episode ep = steel::sample_episode(
            config.dist, task, gen_shots, gen_query, steel::substream(seed, "episode"));
        out << steel::episode_to_json(ep) << '\n';
      }
      std::printf("wrote %lld episodes to %s\n", static_cast<long long>(gen_n),
                  gen_out.c_str());
    } else if (tz->parsed()) {
      const steel::BenchmarkConfig config = resolve_config(global);
      const std::int64_t n = tz_n > 0 ? tz_n : config.zoo_tasks;
      const steel::ModelZoo zoo =
          steel::build_zoo(config.dist, n, config.zoo,
                           steel::substream(config.master_seed, "harness/zoo"));
      steel::save_zoo(zoo, tz_out);
      std::printf("zoo: %lld adapters of dim %lld -> %s\n",
                  static_cast<long long>(zoo.size()),
                  static_cast<long long>(zoo.dim()), tz_out.c_str());
    } else if (td->parsed()) {
      const steel::BenchmarkConfig config = resolve_config(global);
      const steel::ModelZoo zoo = steel::load_zoo(td_zoo);
      steel::DiffusionTrainConfig dcfg = config.diffusion;
      dcfg.denoiser.dim = zoo.dim();
      dcfg.seed = steel::substream(config.master_seed, "harness/diffusion");
      if (td_epochs > 0) dcfg.epochs = td_epochs;
      if (td_stage2 >= 0) dcfg.stage2_epochs = td_stage2;
      steel::DiffusionCheckpoint ckpt = steel::train_diffusion(zoo, dcfg);
      ckpt.metadata.zoo_hash = steel::hash_file_hex(td_zoo);
      steel::save_checkpoint(ckpt, td_out);
      std::printf("diffusion: %lld params, final loss %.5f -> %s\n",
                  static_cast<long long>(ckpt.net.param_count()),
                  ckpt.metadata.final_loss, td_out.c_str());
    } else if (sm->parsed()) {
      const steel::DiffusionCheckpoint ckpt = steel::load_checkpoint(sm_ckpt);
      const steel::HypothesisSet set = steel::sample_params(ckpt, sm_m, sm_seed);
      steel::save_hypothesis_set(set, sm_out);
      std::printf("sampled %lld candidates (hash %s) -> %s\n",
                  static_cast<long long>(set.size()), set.hash.c_str(),
                  sm_out.c_str());
    } else if (ad->parsed()) {
      const steel::BenchmarkConfig config = resolve_config(global);
      const steel::HypothesisSet set = steel::load_hypothesis_set(ad_hyp);
      const auto episodes = steel::load_episodes(ad_episode);
      if (ad_line < 0 || ad_line >= static_cast<std::int64_t>(episodes.size()))
        throw steel::ConfigError("episode line out of range");
      const steel::Episode& ep = episodes[static_cast<std::size_t>(ad_line)];
      steel::SelectionResult sel;
      if (ad_search == "exhaustive") {
        sel = steel::exhaustive_select(set, ep.support, config.loss, ep.way);
      } else if (ad_search == "hier") {
        steel::HierConfig hcfg = config.hier;
        hcfg.seed = steel::substream(config.master_seed, "cli/hier");
        sel = steel::hierarchical_select(set, ep.support, config.loss, ep.way, hcfg);
      } else {
        throw steel::ConfigError("unknown search: " + ad_search);
      }
      write_text(ad_out, sel.to_json());
      std::printf("selected index %lld (risk %.4f, %lld evaluations) -> %s\n",
                  static_cast<long long>(sel.index), sel.risk,
                  static_cast<long long>(sel.evaluations), ad_out.c_str());
      if (!ad_curve.empty()) {
        const std::int64_t stride =
            ad_stride > 0 ? ad_stride : std::max<std::int64_t>(1, set.size() / 50);
        const auto curve = steel::learning_curve(
            set, ep.support, config.loss, ep.way, config.epsilon,
            steel::loss_max(config.loss), stride);
        std::ofstream out(ad_curve, std::ios::trunc);
        out << "m,best_risk,complexity,bound\n";
        for (const auto& p : curve)
          out << p.m << ',' << steel::format_double(p.best_risk) << ','
              << steel::format_double(p.complexity) << ','
              << steel::format_double(p.bound) << '\n';
      }
    } else if (ce->parsed()) {
      steel::RiskCertificate cert;
      if (ce_family == "finite") {
        if (ce_m < 1) throw steel::ConfigError("certify finite: --m required");
        cert = steel::finite_hypothesis_certificate(ce_r, ce_m, ce_n, ce_eps, ce_C);
      } else if (ce_family == "quant") {
        std::int64_t bits = ce_k;
        if (!ce_adapter.empty()) {
          const steel::StzoFile file = steel::load_stzo(ce_adapter);
          if (ce_row < 0 || ce_row >= file.matrix.rows())
            throw steel::ConfigError("certify: --row out of range");
          steel::QuantizationCodecConfig codec;
          codec.levels = ce_levels;
          bits = steel::quantization_complexity(file.matrix.row(ce_row), codec);
        }
        if (bits < 1)
          throw steel::ConfigError("certify quant: --k-bits or --adapter required");
        cert = steel::quantization_certificate(ce_r, bits, ce_n, ce_eps, ce_C);
      } else {
        throw steel::ConfigError("unknown certificate family: " + ce_family);
      }
      const std::string json = cert.to_json();
      std::printf("%s\n", json.c_str());
      if (!ce_out.empty()) write_text(ce_out, json);
    } else if (be->parsed()) {
      steel::BenchmarkConfig config = resolve_config(global);
      if (!be_write_config.empty()) {
        config.save(be_write_config);
        std::printf("wrote default config to %s\n", be_write_config.c_str());
        return kExitOk;
      }
      const steel::BenchmarkOutput output = steel::run_benchmark(config);
      std::printf("benchmark complete: %zu episodes -> %s\n",
                  output.episodes.size(), output.results_path.c_str());
      for (const auto& m : output.overall.per_method)
        std::printf("  %-14s non-vacuous %5.1f%%  median bound %.3f  acc %.3f\n",
                    m.method.c_str(), m.pct_non_vacuous, m.median_bound,
                    m.mean_query_accuracy);
    } else if (re->parsed()) {
      const std::string out_dir = re_out.empty() ? re_results : re_out;
      const steel::ReportResult report = steel::write_report(re_results, out_dir);
      std::printf("%s", report.summary.c_str());
      if (report.skipped > 0)
        std::printf("skipped %lld malformed record(s)\n",
                    static_cast<long long>(report.skipped));
    }
  } catch (const steel::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const steel::FormatError& e) {
    std::fprintf(stderr, "artifact error: %s\n", e.what());
    return kExitArtifact;
  } catch (const steel::ArtifactError& e) {
    std::fprintf(stderr, "artifact error: %s\n", e.what());
    return kExitArtifact;
  } catch (const steel::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitOk;
}
