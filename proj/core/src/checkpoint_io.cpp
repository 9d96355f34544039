#include "steel/checkpoint_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "steel/errors.hpp"
#include "steel/serialize.hpp"

namespace steel {

namespace {
constexpr char kMagic[4] = {'S', 'T', 'D', 'F'};
constexpr std::uint16_t kVersion = 1;

void write_blocks_f32(std::ostream& out,
                      std::vector<std::span<const double>> blocks) {
  for (auto block : blocks) {
    const auto bytes = pack_f32(block);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
}

void read_blocks_f32(std::istream& in, std::vector<std::span<double>> blocks) {
  for (auto block : blocks) {
    std::vector<std::uint8_t> bytes(block.size() * 4);
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
      throw FormatError("truncated STDF weight blob");
    const std::vector<double> values = unpack_f32(bytes);
    std::copy(values.begin(), values.end(), block.begin());
  }
}

}  // namespace

void save_checkpoint(const DiffusionCheckpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write: " + path);
  out.write(kMagic, 4);
  write_u16(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(ckpt.config.dim));
  write_u32(out, static_cast<std::uint32_t>(ckpt.config.hidden_dim()));
  write_u32(out, static_cast<std::uint32_t>(ckpt.schedule.timesteps));
  out.put(static_cast<char>(ckpt.config.hidden_layers));
  std::uint8_t flags = 0;
  if (ckpt.config.round_hidden_to_512) flags |= 1;
  if (ckpt.sampler_variance == SamplerVariance::beta_tilde) flags |= 2;
  out.put(static_cast<char>(flags));
  write_u16(out, 0);  // reserved

  write_f64(out, ckpt.schedule.beta_min);
  write_f64(out, ckpt.schedule.beta_max);
  for (double v : ckpt.stats.mean) write_f64(out, v);
  for (double v : ckpt.stats.std_dev) write_f64(out, v);

  write_blocks_f32(out, ckpt.net.param_blocks());
  write_blocks_f32(out, ckpt.ema.param_blocks());

  nlohmann::ordered_json meta;
  meta["epochs"] = ckpt.metadata.epochs;
  meta["stage2_epochs"] = ckpt.metadata.stage2_epochs;
  meta["batch_size"] = ckpt.metadata.batch_size;
  meta["optimizer"] = ckpt.metadata.optimizer;
  meta["lr"] = ckpt.metadata.lr;
  meta["ema_decay"] = ckpt.metadata.ema_decay;
  meta["seed"] = ckpt.metadata.seed;
  meta["loss_first_tenth"] = ckpt.metadata.loss_first_tenth;
  meta["loss_last_tenth"] = ckpt.metadata.loss_last_tenth;
  meta["final_loss"] = ckpt.metadata.final_loss;
  meta["zoo_hash"] = ckpt.metadata.zoo_hash;
  const std::string meta_json = meta.dump();
  out.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  if (!out) throw ArtifactError("write failed: " + path);
}

DiffusionCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not an STDF file: " + path);
  const std::uint16_t version = read_u16(in);
  if (version != kVersion)
    throw FormatError("unsupported STDF version " + std::to_string(version));

  DiffusionCheckpoint ckpt;
  const std::uint32_t dim = read_u32(in);
  const std::uint32_t hidden = read_u32(in);
  const std::uint32_t timesteps = read_u32(in);
  const int layers = in.get();
  const int flags = in.get();
  read_u16(in);  // reserved
  if (!in) throw FormatError("truncated STDF header: " + path);

  ckpt.config.dim = dim;
  ckpt.config.hidden_override = hidden;
  ckpt.config.hidden_layers = layers;
  ckpt.config.round_hidden_to_512 = (flags & 1) != 0;
  ckpt.sampler_variance =
      (flags & 2) ? SamplerVariance::beta_tilde : SamplerVariance::beta;

  const double beta_min = read_f64(in);
  const double beta_max = read_f64(in);
  ckpt.schedule = make_schedule(timesteps, beta_min, beta_max);

  ckpt.stats.mean.resize(dim);
  ckpt.stats.std_dev.resize(dim);
  for (double& v : ckpt.stats.mean) v = read_f64(in);
  for (double& v : ckpt.stats.std_dev) v = read_f64(in);

  ckpt.net = Denoiser(ckpt.config);
  ckpt.ema = Denoiser(ckpt.config);
  read_blocks_f32(in, ckpt.net.param_blocks());
  read_blocks_f32(in, ckpt.ema.param_blocks());

  std::ostringstream meta_stream;
  meta_stream << in.rdbuf();
  const std::string meta_json = meta_stream.str();
  if (meta_json.empty()) throw FormatError("missing STDF metadata: " + path);
  try {
    const auto meta = nlohmann::json::parse(meta_json);
    ckpt.metadata.epochs = meta.at("epochs").get<std::int64_t>();
    ckpt.metadata.stage2_epochs = meta.at("stage2_epochs").get<std::int64_t>();
    ckpt.metadata.batch_size = meta.at("batch_size").get<std::int64_t>();
    ckpt.metadata.optimizer = meta.at("optimizer").get<std::string>();
    ckpt.metadata.lr = meta.at("lr").get<double>();
    ckpt.metadata.ema_decay = meta.at("ema_decay").get<double>();
    ckpt.metadata.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.metadata.loss_first_tenth = meta.at("loss_first_tenth").get<double>();
    ckpt.metadata.loss_last_tenth = meta.at("loss_last_tenth").get<double>();
    ckpt.metadata.final_loss = meta.at("final_loss").get<double>();
    ckpt.metadata.zoo_hash = meta.at("zoo_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt STDF metadata: " + std::string(e.what()));
  }
  return ckpt;
}

}  // namespace steel
