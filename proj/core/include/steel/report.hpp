#pragma once

#include <cstdint>
#include <string>

#include "steel/harness.hpp"

namespace steel {

struct ReportResult {
  std::int64_t records = 0;
  std::int64_t skipped = 0;
  std::string summary;  // also written to summary.txt
};

// Reads every *.jsonl episode-result file under results_dir (sorted by name),
// skips malformed records with a count, and regenerates summary.txt,
// aggregates.csv, and bound_vs_shots.csv under out_dir. Deterministic: the
// same inputs produce byte-identical outputs.
ReportResult write_report(const std::string& results_dir,
                          const std::string& out_dir);

}  // namespace steel
