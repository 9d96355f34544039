#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "steel/errors.hpp"
#include "steel/rng.hpp"
#include "steel/stzo_io.hpp"
#include "steel/taskgen.hpp"
#include "steel/zoo.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace steel;

namespace {

namespace fs = std::filesystem;

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

// Multiclass perceptron: converges to zero training error iff the support is
// linearly separable (independent of the gradient-descent training path).
bool perceptron_separable(const LabeledSet& set, std::int64_t way,
                          int max_epochs = 4000) {
  const std::int64_t d_feat = set.features.cols();
  std::vector<double> w(static_cast<std::size_t>(way * d_feat + way), 0.0);
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    int mistakes = 0;
    for (std::int64_t i = 0; i < set.size(); ++i) {
      const auto x = set.features.row(i);
      const std::int32_t y = set.labels[i];
      const std::int32_t pred = head_predict(w, x, way);
      if (pred != y) {
        ++mistakes;
        for (std::int64_t j = 0; j < d_feat; ++j) {
          w[y * d_feat + j] += x[j];
          w[pred * d_feat + j] -= x[j];
        }
        w[way * d_feat + y] += 1.0;
        w[way * d_feat + pred] -= 1.0;
      }
    }
    if (mistakes == 0) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("training drives a separable support to zero error") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 31);
  const Episode ep = sample_episode(cfg, task, 5, 1, 77);
  REQUIRE(perceptron_separable(ep.support, cfg.way));

  AdapterTrainConfig train;
  train.epochs = 600;
  const AdapterVector adapter = train_adapter(ep, train);
  CHECK(head_error(adapter.values, ep.support, cfg.way) == doctest::Approx(0.0));
  CHECK(adapter.dim() == cfg.adapter_dim());
  CHECK(adapter.task_id == task.id);
}

TEST_CASE("zero epochs returns the zero initialization") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 3);
  const Episode ep = sample_episode(cfg, task, 2, 1, 5);
  AdapterTrainConfig train;
  train.epochs = 0;
  const AdapterVector adapter = train_adapter(ep, train);
  for (double v : adapter.values) CHECK(v == 0.0);
}

TEST_CASE("adapter training is deterministic") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 13);
  const Episode ep = sample_episode(cfg, task, 8, 1, 5);
  AdapterTrainConfig train;
  const AdapterVector a = train_adapter(ep, train);
  const AdapterVector b = train_adapter(ep, train);
  CHECK(a.values == b.values);
}

TEST_CASE("training does not hurt: trained error <= zero-init error") {
  TaskDistributionConfig cfg;
  AdapterTrainConfig train;
  for (int rep = 0; rep < 6; ++rep) {
    const TaskSpec task = sample_task(cfg, substream(50, "test/zoo", rep), rep);
    const Episode ep =
        sample_episode(cfg, task, 8, 1, substream(51, "test/zoo", rep));
    const AdapterVector trained = train_adapter(ep, train);
    const std::vector<double> init(static_cast<std::size_t>(cfg.adapter_dim()), 0.0);
    CHECK(head_error(trained.values, ep.support, cfg.way) <=
          head_error(init, ep.support, cfg.way));
  }
}

TEST_CASE("empty support is rejected; divergence carries last finite state") {
  TaskDistributionConfig cfg;
  const TaskSpec task = sample_task(cfg, 3);
  Episode ep = sample_episode(cfg, task, 2, 1, 5);
  ep.support = LabeledSet{};
  AdapterTrainConfig train;
  CHECK_THROWS_AS(train_adapter(ep, train), std::invalid_argument);
}

TEST_CASE("build_zoo shapes, manifest bookkeeping, and single-row zoo") {
  TaskDistributionConfig cfg;
  ZooBuildConfig zcfg;
  zcfg.shots = 4;
  zcfg.train.epochs = 40;

  const ModelZoo zoo = build_zoo(cfg, 5, zcfg, 99);
  CHECK(zoo.size() == 5);
  CHECK(zoo.dim() == cfg.adapter_dim());
  CHECK(zoo.manifest.n == 5);
  CHECK(zoo.manifest.d == cfg.adapter_dim());
  CHECK(zoo.manifest.task_ids.size() == 5);
  CHECK(zoo.rows.all_finite());

  const ModelZoo single = build_zoo(cfg, 1, zcfg, 99);
  CHECK(single.size() == 1);

  CHECK_THROWS_AS(build_zoo(cfg, 0, zcfg, 99), std::invalid_argument);
}

TEST_CASE("parallel and serial zoo builds produce identical matrices") {
  TaskDistributionConfig cfg;
  ZooBuildConfig zcfg;
  zcfg.shots = 4;
  zcfg.train.epochs = 30;

#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const ModelZoo serial = build_zoo(cfg, 8, zcfg, 7);
  omp_set_num_threads(saved);
#else
  const ModelZoo serial = build_zoo(cfg, 8, zcfg, 7);
#endif
  const ModelZoo parallel = build_zoo(cfg, 8, zcfg, 7);
  CHECK(serial.rows.storage() == parallel.rows.storage());
}

TEST_CASE("zoo save/load round trip is bit-exact at serialized precision") {
  TaskDistributionConfig cfg;
  ZooBuildConfig zcfg;
  zcfg.shots = 2;
  zcfg.train.epochs = 20;
  const ModelZoo zoo = build_zoo(cfg, 3, zcfg, 5);

  const auto path = temp_file("steel_test_zoo.stzo");
  save_zoo(zoo, path.string());
  const ModelZoo loaded = load_zoo(path.string());
  CHECK(loaded.manifest.n == zoo.manifest.n);
  CHECK(loaded.manifest.d == zoo.manifest.d);
  CHECK(loaded.manifest.config_hash == zoo.manifest.config_hash);

  // Serialized precision is f32: saving the loaded zoo again must reproduce
  // the file byte-for-byte.
  const auto path2 = temp_file("steel_test_zoo2.stzo");
  save_zoo(loaded, path2.string());
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("truncated and inconsistent zoo files are rejected") {
  TaskDistributionConfig cfg;
  ZooBuildConfig zcfg;
  zcfg.shots = 2;
  zcfg.train.epochs = 10;
  const ModelZoo zoo = build_zoo(cfg, 3, zcfg, 5);
  const auto path = temp_file("steel_test_zoo_corrupt.stzo");
  save_zoo(zoo, path.string());

  SUBCASE("truncation") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 3));
    out.close();
    CHECK_THROWS_AS(load_zoo(path.string()), FormatError);
  }
  SUBCASE("manifest dimension mismatch") {
    StzoFile file = load_stzo(path.string());
    auto manifest = nlohmann::json::parse(file.manifest_json);
    manifest["d"] = 9999;
    save_stzo(path.string(), file.matrix, manifest.dump());
    CHECK_THROWS_AS(load_zoo(path.string()), FormatError);
  }
  SUBCASE("bad magic") {
    std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
    io.write("NOPE", 4);
    io.close();
    CHECK_THROWS_AS(load_zoo(path.string()), FormatError);
  }
  fs::remove(path);
}
