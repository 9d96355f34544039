#include "steel/rng.hpp"

#include <cmath>

namespace steel {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

double u64_to_unit(std::uint64_t x) {
  // Top 53 bits -> [0, 1).
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}
}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t substream(std::uint64_t master, std::string_view name,
                        std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV offset basis
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(master ^ mix64(h) ^ mix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

double Rng::uniform() { return u64_to_unit(next_u64()); }

double Rng::uniform_pos() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform_pos();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) return 0;
  std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound) - 1;
  for (;;) {
    std::uint64_t x = next_u64();
    if (x <= limit) return x % bound;
  }
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(
                  below(static_cast<std::uint64_t>(hi - lo) + 1));
}

std::uint64_t CounterRng::next_u64() { return mix64(seed_ + counter_++ * kGolden); }

double CounterRng::uniform() { return u64_to_unit(next_u64()); }

double CounterRng::uniform_pos() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double CounterRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform_pos();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

}  // namespace steel
