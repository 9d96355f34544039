#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace steel {

// Streaming FNV-1a over bytes. Used to fingerprint artifacts (zoo files,
// hypothesis sets, configs) for provenance records, not for security.
class ByteHasher {
 public:
  void update(const void* data, std::size_t len);
  void update(std::span<const double> values);
  void update(std::string_view s);
  void update_u64(std::uint64_t v);

  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string hash_hex(const void* data, std::size_t len);
std::string hash_file_hex(const std::string& path);

}  // namespace steel
