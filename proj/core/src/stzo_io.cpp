#include "steel/stzo_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "steel/errors.hpp"
#include "steel/serialize.hpp"
#include "steel/zoo.hpp"

namespace steel {

namespace {
constexpr char kMagic[4] = {'S', 'T', 'Z', 'O'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void save_stzo(const std::string& path, const Matrix& matrix,
               const std::string& manifest_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write: " + path);
  out.write(kMagic, 4);
  write_u16(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(matrix.cols()));
  write_u32(out, static_cast<std::uint32_t>(matrix.rows()));
  out.put(0);  // dtype 0 = f32
  for (int i = 0; i < 9; ++i) out.put(0);
  const auto payload = pack_f32(matrix.storage());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  out.write(manifest_json.data(),
            static_cast<std::streamsize>(manifest_json.size()));
  if (!out) throw ArtifactError("write failed: " + path);
}

StzoFile load_stzo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not an STZO file: " + path);
  const std::uint16_t version = read_u16(in);
  if (version != kVersion)
    throw FormatError("unsupported STZO version " + std::to_string(version));
  const std::uint32_t d = read_u32(in);
  const std::uint32_t n = read_u32(in);
  const int dtype = in.get();
  if (dtype != 0) throw FormatError("unsupported STZO dtype");
  in.ignore(9);
  if (!in) throw FormatError("truncated STZO header: " + path);

  const std::size_t payload_bytes = static_cast<std::size_t>(n) * d * 4;
  std::vector<std::uint8_t> payload(payload_bytes);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload_bytes));
  if (static_cast<std::size_t>(in.gcount()) != payload_bytes)
    throw FormatError("truncated STZO payload: " + path);

  std::ostringstream manifest;
  manifest << in.rdbuf();

  StzoFile file;
  file.manifest_json = manifest.str();
  if (file.manifest_json.empty())
    throw FormatError("missing STZO manifest: " + path);
  const std::vector<double> values = unpack_f32(payload);
  file.matrix = Matrix(n, d);
  std::copy(values.begin(), values.end(), file.matrix.storage().begin());
  return file;
}

void save_zoo(const ModelZoo& zoo, const std::string& path) {
  nlohmann::ordered_json manifest;
  manifest["kind"] = "zoo";
  manifest["n"] = zoo.manifest.n;
  manifest["d"] = zoo.manifest.d;
  manifest["task_ids"] = zoo.manifest.task_ids;
  manifest["config_hash"] = zoo.manifest.config_hash;
  manifest["master_seed"] = zoo.manifest.master_seed;
  save_stzo(path, zoo.rows, manifest.dump());
}

ModelZoo load_zoo(const std::string& path) {
  StzoFile file = load_stzo(path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(file.manifest_json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt zoo manifest: " + std::string(e.what()));
  }
  ModelZoo zoo;
  try {
    if (manifest.at("kind").get<std::string>() != "zoo")
      throw FormatError("not a zoo file: " + path);
    zoo.manifest.n = manifest.at("n").get<std::int64_t>();
    zoo.manifest.d = manifest.at("d").get<std::int64_t>();
    zoo.manifest.task_ids =
        manifest.at("task_ids").get<std::vector<std::int64_t>>();
    zoo.manifest.config_hash = manifest.at("config_hash").get<std::string>();
    zoo.manifest.master_seed = manifest.at("master_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt zoo manifest: " + std::string(e.what()));
  }
  if (zoo.manifest.n != file.matrix.rows() ||
      zoo.manifest.d != file.matrix.cols())
    throw FormatError("zoo manifest does not match payload dims: " + path);
  if (zoo.manifest.task_ids.size() != static_cast<std::size_t>(zoo.manifest.n))
    throw FormatError("zoo manifest task id count mismatch: " + path);
  zoo.rows = std::move(file.matrix);
  return zoo;
}

}  // namespace steel
