#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace steel {

// splitmix64 finalizer. Stateless; used for seed derivation and the
// counter-based streams below.
std::uint64_t mix64(std::uint64_t x);

// Derive a child seed from (master, component name, index). Component names
// keep per-module streams independent ("zoo/task", "diffusion/sample", ...).
std::uint64_t substream(std::uint64_t master, std::string_view name,
                        std::uint64_t index = 0);

// Deterministic random stream. mt19937_64 output is fully specified by the
// standard; uniform/normal are built on it directly because the std
// distributions are implementation-defined and would break byte-identical
// reruns across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1), 53-bit resolution.
  double uniform();
  // (0, 1]; safe as a log() argument.
  double uniform_pos();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller with pair caching.
  double normal();
  // Unbiased integer in [0, bound) via rejection.
  std::uint64_t below(std::uint64_t bound);
  // Inclusive range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Counter-based stream: output i is mix64(seed + i*golden), i.e. splitmix64.
// Cheap to construct, so per-sample streams can fan out without carrying
// mt19937_64 state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  double uniform();
  double uniform_pos();
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace steel
