#include "callipaint/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "callipaint/error.hpp"
#include "callipaint/png_io.hpp"
#include "binary_io.hpp"

namespace callipaint {
namespace {

using io::Cursor;
using io::Writer;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

nlohmann::json config_to_json(const DenoiserConfig& c) {
  return {{"height", c.resolution.height},
          {"width", c.resolution.width},
          {"base_channels", c.base_channels},
          {"channel_mults", c.channel_mults},
          {"time_embed_dim", c.time_embed_dim},
          {"vocab_character", c.vocab_character},
          {"vocab_script", c.vocab_script},
          {"vocab_style", c.vocab_style},
          {"groups", c.groups}};
}

DenoiserConfig config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.resolution = {j.at("height").get<int>(), j.at("width").get<int>()};
  c.base_channels = j.at("base_channels").get<int>();
  c.channel_mults = j.at("channel_mults").get<std::vector<int>>();
  c.time_embed_dim = j.at("time_embed_dim").get<int>();
  c.vocab_character = j.at("vocab_character").get<int>();
  c.vocab_script = j.at("vocab_script").get<int>();
  c.vocab_style = j.at("vocab_style").get<int>();
  c.groups = j.at("groups").get<int>();
  return c;
}

}  // namespace

std::string Checkpoint::model_id() const {
  const auto bytes = serialize_checkpoint(*this);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& store = ckpt.params.store();
  nlohmann::json meta = {
      {"config", config_to_json(ckpt.params.config())},
      {"vocab",
       {{"character", ckpt.meta.vocab.character},
        {"script", ckpt.meta.vocab.script},
        {"style", ckpt.meta.vocab.style}}},
      {"step", ckpt.meta.step},
      {"schedule",
       {{"steps", ckpt.meta.schedule.steps},
        {"beta_start", ckpt.meta.schedule.beta_start},
        {"beta_end", ckpt.meta.schedule.beta_end}}},
      {"loss_tail", ckpt.meta.loss_tail}};
  Writer w;
  w.bytes("CPKT", 4);
  w.u32(kCheckpointVersion);
  w.str(meta.dump());
  w.u32(static_cast<std::uint32_t>(store.tensors.size()));
  for (const auto& t : store.tensors) {
    w.str(t.name);
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(static_cast<std::uint64_t>(d));
    w.u8(0);
    w.bytes(store.values.data() + t.offset, t.size * sizeof(float));
  }
  return std::move(w.out);
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Cursor c(bytes, "checkpoint");
  char magic[4];
  c.bytes(magic, 4);
  require(std::memcmp(magic, "CPKT", 4) == 0, ErrorKind::kFormat,
          "not a checkpoint file (bad magic)");
  const std::uint32_t version = c.u32();
  require(version == kCheckpointVersion, ErrorKind::kVersionMismatch,
          "unsupported checkpoint version " + std::to_string(version) +
              " (expected " + std::to_string(kCheckpointVersion) + ")");
  nlohmann::json meta;
  DenoiserConfig config;
  CheckpointMeta m;
  try {
    meta = nlohmann::json::parse(c.str());
    config = config_from_json(meta.at("config"));
    m.vocab.character = meta.at("vocab").at("character").get<std::vector<std::string>>();
    m.vocab.script = meta.at("vocab").at("script").get<std::vector<std::string>>();
    m.vocab.style = meta.at("vocab").at("style").get<std::vector<std::string>>();
    m.step = meta.at("step").get<long>();
    m.schedule.steps = meta.at("schedule").at("steps").get<int>();
    m.schedule.beta_start = meta.at("schedule").at("beta_start").get<double>();
    m.schedule.beta_end = meta.at("schedule").at("beta_end").get<double>();
    m.loss_tail = meta.at("loss_tail").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("checkpoint metadata: ") + e.what());
  }
  require(static_cast<int>(m.vocab.character.size()) == config.vocab_character &&
              static_cast<int>(m.vocab.script.size()) == config.vocab_script &&
              static_cast<int>(m.vocab.style.size()) == config.vocab_style,
          ErrorKind::kVocabulary,
          "checkpoint vocabularies disagree with the embedded config");
  config.validate();

  const auto expected = denoiser_tensor_layout(config);
  const std::uint32_t count = c.u32();
  require(count == expected.size(), ErrorKind::kShapeMismatch,
          "checkpoint tensor count " + std::to_string(count) +
              " inconsistent with config (" + std::to_string(expected.size()) + ")");
  ParamStore store;
  store.tensors = expected;
  store.values.resize(expected.empty() ? 0
                                       : expected.back().offset + expected.back().size);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto& want = expected[i];
    const std::string name = c.str();
    const std::uint8_t rank = c.u8();
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::int64_t>(c.u64());
    const std::uint8_t dtype = c.u8();
    require(dtype == 0, ErrorKind::kFormat, "unsupported tensor dtype tag");
    require(name == want.name && shape == want.shape, ErrorKind::kShapeMismatch,
            "tensor '" + name + "' inconsistent with embedded config");
    c.bytes(store.values.data() + want.offset, want.size * sizeof(float));
  }
  require(c.at_end(), ErrorKind::kFormat, "trailing bytes after checkpoint");
  Checkpoint ckpt{DenoiserParams(config, std::move(store)), std::move(m)};
  require(ckpt.params.store().all_finite(), ErrorKind::kNonFinite,
          "checkpoint contains non-finite parameters");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path));
}

}  // namespace callipaint
