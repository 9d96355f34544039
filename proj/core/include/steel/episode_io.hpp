#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "steel/taskgen.hpp"

namespace steel {

// One episode per JSONL line: task latents, seeds, labels, and raw/feature
// arrays as base64-encoded little-endian float32.
std::string episode_to_json(const Episode& episode);
Episode episode_from_json(const std::string& line);

void write_episodes_jsonl(std::ostream& out,
                          const std::vector<Episode>& episodes);
std::vector<Episode> read_episodes_jsonl(std::istream& in);
std::vector<Episode> load_episodes(const std::string& path);

}  // namespace steel
