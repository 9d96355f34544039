#pragma once

#include <string>

#include "steel/diffusion.hpp"

namespace steel {

// STDF container: header (magic "STDF", version, d, hidden, T, layer count,
// flags), schedule parameters and f64 normalization stats, raw and EMA
// weight blobs as little-endian float32, then a JSON metadata trailer.
void save_checkpoint(const DiffusionCheckpoint& checkpoint,
                     const std::string& path);
DiffusionCheckpoint load_checkpoint(const std::string& path);

}  // namespace steel
