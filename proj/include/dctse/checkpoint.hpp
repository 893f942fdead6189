#pragma once

// Binary checkpoint container.
//
//   bytes 0..7    "DCTSECKP"
//   bytes 8..15   header length H, uint64 little-endian
//   next H bytes  UTF-8 JSON header
//   remainder     float32 little-endian sections, in header order
//
// The header echoes the U-net and frame configuration, the parameter layout
// table (name, kind, shape, offset, count, trainable, frozen), seed, step and
// epoch counters, and the optimizer options. Sections are "params" and,
// when optimizer state is stored, "adam_m" and "adam_v"; each has the same
// length as the parameter vector.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dctse/spectral.hpp"
#include "dctse/training.hpp"
#include "dctse/unet.hpp"

namespace dctse {

inline constexpr char kCheckpointMagic[8] = {'D', 'C', 'T', 'S', 'E', 'C', 'K', 'P'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  nn::UNetConfig unet;
  FrameConfig frames;
  nn::ParameterSet<float> params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::optional<TrainConfig> train;
  std::optional<AdamState<float>> adam;
};

nlohmann::json frame_config_to_json(const FrameConfig& c);
FrameConfig frame_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws MalformedInput on a bad magic, truncated data or inconsistent layout.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64-bit, as 16 hex digits.
std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes);
std::string file_digest(const std::filesystem::path& path);

}  // namespace dctse
