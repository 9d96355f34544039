#pragma once

#include <string>

#include "steel/matrix.hpp"

namespace steel {

// STZO container: 24-byte header (magic "STZO", version u16, d u32, n u32,
// dtype u8, reserved), row-major little-endian float32 payload, then a JSON
// manifest running to EOF. Used for model zoos and hypothesis sets.
struct StzoFile {
  Matrix matrix;
  std::string manifest_json;
};

void save_stzo(const std::string& path, const Matrix& matrix,
               const std::string& manifest_json);
StzoFile load_stzo(const std::string& path);

}  // namespace steel
