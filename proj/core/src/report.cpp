#include "steel/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "steel/errors.hpp"
#include "steel/serialize.hpp"

namespace steel {

namespace fs = std::filesystem;

namespace {

void emit_rows(std::ostream& out, const std::vector<EpisodeResult>& results,
               std::int64_t shots, const std::string& shots_label,
               LossKind loss) {
  AggregateStats stats;
  try {
    stats = aggregate_for_shots(results, shots, loss,
                                results.front().way, loss_max(loss));
  } catch (const std::invalid_argument&) {
    return;  // no records for this shot count
  }
  for (const MethodAggregate& m : stats.per_method) {
    out << m.method << ',' << shots_label << ',' << m.episodes << ','
        << format_double(m.pct_non_vacuous) << ',' << format_double(m.median_gap)
        << ',' << format_double(m.min_bound) << ','
        << format_double(m.median_bound) << ',' << format_double(m.max_bound)
        << ',' << format_double(m.mean_query_accuracy) << ','
        << format_double(m.mean_support_risk) << ','
        << format_double(m.mean_query_risk) << '\n';
  }
}

}  // namespace

ReportResult write_report(const std::string& results_dir,
                          const std::string& out_dir) {
  if (!fs::is_directory(results_dir))
    throw ArtifactError("no results: not a directory: " + results_dir);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ArtifactError("no results in " + results_dir);

  ReportResult report;
  std::vector<EpisodeResult> results;
  for (const std::string& file : files) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        results.push_back(EpisodeResult::from_json(line));
        ++report.records;
      } catch (const FormatError&) {
        ++report.skipped;
      }
    }
  }
  if (results.empty()) throw ArtifactError("no results in " + results_dir);

  // The certificate records carry their loss name; all current losses share
  // C = 1 and the 0/1 chance threshold applies to zero_one only.
  const LossKind loss =
      results.front().methods.empty()
          ? LossKind::zero_one
          : loss_from_name(results.front().methods.front().certificate.loss);

  std::set<std::int64_t> shot_values;
  for (const EpisodeResult& ep : results) shot_values.insert(ep.shots);

  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/aggregates.csv", std::ios::trunc);
    out << "method,shots,episodes,pct_non_vacuous,median_gap,min_bound,"
           "median_bound,max_bound,mean_query_accuracy,mean_support_risk,"
           "mean_query_risk\n";
    for (std::int64_t s : shot_values)
      emit_rows(out, results, s, std::to_string(s), loss);
    emit_rows(out, results, -1, "all", loss);
  }
  {
    std::ofstream out(out_dir + "/bound_vs_shots.csv", std::ios::trunc);
    out << "shots,method,min_bound,median_bound,max_bound,mean_support_risk,"
           "mean_query_risk,log_median_complexity,pct_non_vacuous\n";
    for (std::int64_t s : shot_values) {
      AggregateStats stats;
      try {
        stats = aggregate_for_shots(results, s, loss, results.front().way,
                                    loss_max(loss));
      } catch (const std::invalid_argument&) {
        continue;
      }
      // Median complexity per (shot, method) for the error-vs-complexity view.
      for (const MethodAggregate& m : stats.per_method) {
        std::vector<double> complexities;
        for (const EpisodeResult& ep : results) {
          if (ep.shots != s) continue;
          for (const MethodResult& mr : ep.methods)
            if (mr.method == m.method)
              complexities.push_back(mr.certificate.complexity);
        }
        std::sort(complexities.begin(), complexities.end());
        const double median_complexity =
            complexities.empty()
                ? 0.0
                : (complexities.size() % 2 == 1
                       ? complexities[complexities.size() / 2]
                       : 0.5 * (complexities[complexities.size() / 2 - 1] +
                                complexities[complexities.size() / 2]));
        out << s << ',' << m.method << ',' << format_double(m.min_bound) << ','
            << format_double(m.median_bound) << ','
            << format_double(m.max_bound) << ','
            << format_double(m.mean_support_risk) << ','
            << format_double(m.mean_query_risk) << ','
            << format_double(std::log(std::max(median_complexity, 1e-300)))
            << ',' << format_double(m.pct_non_vacuous) << '\n';
      }
    }
  }

  std::ostringstream summary;
  summary << "episodes: " << report.records << "  (skipped records: "
          << report.skipped << ")\n";
  summary << "method            shots  episodes  %non-vac  med-gap  min-bound"
             "  med-bound  max-bound  mean-acc\n";
  auto emit_summary = [&](std::int64_t s, const std::string& label) {
    AggregateStats stats;
    try {
      stats = aggregate_for_shots(results, s, loss, results.front().way,
                                  loss_max(loss));
    } catch (const std::invalid_argument&) {
      return;
    }
    for (const MethodAggregate& m : stats.per_method) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "%-17s %5s %9lld %9.1f %8.3f %10.3f %10.3f %10.3f %9.3f\n",
                    m.method.c_str(), label.c_str(),
                    static_cast<long long>(m.episodes), m.pct_non_vacuous,
                    m.median_gap, m.min_bound, m.median_bound, m.max_bound,
                    m.mean_query_accuracy);
      summary << line;
    }
  };
  for (std::int64_t s : shot_values) emit_summary(s, std::to_string(s));
  emit_summary(-1, "all");
  report.summary = summary.str();
  {
    std::ofstream out(out_dir + "/summary.txt", std::ios::trunc);
    out << report.summary;
  }
  return report;
}

}  // namespace steel
