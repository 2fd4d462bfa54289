#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "callipaint/corpus.hpp"
#include "callipaint/denoiser.hpp"
#include "callipaint/diffusion.hpp"

namespace callipaint {

struct CheckpointMeta {
  long step = 0;
  std::vector<double> loss_tail;
  ScheduleId schedule;
  Vocabularies vocab;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  DenoiserParams params;
  CheckpointMeta meta;

  // 16 hex digits of a hash over config, vocabularies and tensor bytes.
  std::string model_id() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Binary layout, all integers little-endian:
//   "CPKT" | u32 version | u32 len + UTF-8 JSON metadata | u32 tensor count |
//   per tensor: u32 len + name, u8 rank, u64 dims[rank], u8 dtype (0 = f32),
//   raw f32 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace callipaint
