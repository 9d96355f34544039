#include "steel/hash.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "steel/errors.hpp"

namespace steel {

namespace {
constexpr std::uint64_t kPrime = 0x100000001b3ULL;
}

void ByteHasher::update(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    state_ ^= p[i];
    state_ *= kPrime;
  }
}

void ByteHasher::update(std::span<const double> values) {
  update(values.data(), values.size_bytes());
}

void ByteHasher::update(std::string_view s) { update(s.data(), s.size()); }

void ByteHasher::update_u64(std::uint64_t v) { update(&v, sizeof(v)); }

std::string ByteHasher::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(state_));
  return std::string(buf);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  ByteHasher h;
  h.update(data, len);
  return h.value();
}

std::string hash_hex(const void* data, std::size_t len) {
  ByteHasher h;
  h.update(data, len);
  return h.hex();
}

std::string hash_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open for hashing: " + path);
  ByteHasher h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

}  // namespace steel
