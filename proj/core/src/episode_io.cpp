#include "steel/episode_io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "steel/errors.hpp"
#include "steel/serialize.hpp"

namespace steel {

namespace {

std::string encode_matrix(const Matrix& m) {
  return base64_encode(pack_f32(m.storage()));
}

Matrix decode_matrix(const std::string& text, std::int64_t rows,
                     std::int64_t cols) {
  const std::vector<double> values = unpack_f32(base64_decode(text));
  if (static_cast<std::int64_t>(values.size()) != rows * cols)
    throw FormatError("episode payload size mismatch");
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.storage().begin());
  return m;
}

void append_set(std::string& out, const LabeledSet& set) {
  out += "{\"labels\":[";
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(set.labels[i]);
  }
  out += "],\"raw_b64\":\"";
  out += encode_matrix(set.raw);
  out += "\",\"features_b64\":\"";
  out += encode_matrix(set.features);
  out += "\"}";
}

LabeledSet set_from_json(const nlohmann::json& j, std::int64_t input_dim,
                         std::int64_t feature_dim) {
  LabeledSet set;
  set.labels = j.at("labels").get<std::vector<std::int32_t>>();
  const auto n = static_cast<std::int64_t>(set.labels.size());
  set.raw = decode_matrix(j.at("raw_b64").get<std::string>(), n, input_dim);
  set.features =
      decode_matrix(j.at("features_b64").get<std::string>(), n, feature_dim);
  return set;
}

}  // namespace

std::string episode_to_json(const Episode& ep) {
  std::string out;
  out.reserve(256 + 8 * static_cast<std::size_t>(ep.support.raw.size() +
                                                 ep.query.raw.size()));
  out += "{\"task\":{\"id\":" + std::to_string(ep.task.id);
  out += ",\"angle\":" + format_double(ep.task.angle);
  out += ",\"seed\":" + std::to_string(ep.task.seed) + "}";
  out += ",\"shots\":" + std::to_string(ep.shots);
  out += ",\"way\":" + std::to_string(ep.way);
  out += ",\"query_per_class\":" + std::to_string(ep.query_per_class);
  out += ",\"seed\":" + std::to_string(ep.seed);
  out += ",\"input_dim\":" + std::to_string(ep.support.raw.cols());
  out += ",\"feature_dim\":" + std::to_string(ep.support.features.cols());
  out += ",\"support\":";
  append_set(out, ep.support);
  out += ",\"query\":";
  append_set(out, ep.query);
  out += "}";
  return out;
}

Episode episode_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("episode JSON parse error: ") + e.what());
  }
  try {
    Episode ep;
    const auto& task = j.at("task");
    ep.task.id = task.at("id").get<std::int64_t>();
    ep.task.angle = task.at("angle").get<double>();
    ep.task.seed = task.at("seed").get<std::uint64_t>();
    ep.shots = j.at("shots").get<std::int64_t>();
    ep.way = j.at("way").get<std::int64_t>();
    ep.query_per_class = j.at("query_per_class").get<std::int64_t>();
    ep.seed = j.at("seed").get<std::uint64_t>();
    const auto input_dim = j.at("input_dim").get<std::int64_t>();
    const auto feature_dim = j.at("feature_dim").get<std::int64_t>();
    ep.support = set_from_json(j.at("support"), input_dim, feature_dim);
    ep.query = set_from_json(j.at("query"), input_dim, feature_dim);
    return ep;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("episode JSON field error: ") + e.what());
  }
}

void write_episodes_jsonl(std::ostream& out,
                          const std::vector<Episode>& episodes) {
  for (const Episode& ep : episodes) out << episode_to_json(ep) << '\n';
}

std::vector<Episode> read_episodes_jsonl(std::istream& in) {
  std::vector<Episode> episodes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    episodes.push_back(episode_from_json(line));
  }
  return episodes;
}

std::vector<Episode> load_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("cannot open episode file: " + path);
  return read_episodes_jsonl(in);
}

}  // namespace steel
