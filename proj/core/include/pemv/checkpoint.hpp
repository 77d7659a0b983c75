#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "pemv/config.hpp"
#include "pemv/model.hpp"

namespace pemv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "PEMVCKPT" | u32 version | u64 header length | JSON header |
// tensor payloads in header order (little-endian float32 / float64).
// The header carries the full resolved config text, its hash, the run seed,
// the epoch, the tensor table and the prototype flags.
std::string serialize_checkpoint(PemvModel& model, const ExperimentConfig& config, std::uint64_t seed,
                                 int epoch);
void write_checkpoint(const std::filesystem::path& path, std::string_view bytes);

struct LoadedCheckpoint {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string config_hash;
  std::unique_ptr<PemvModel> model;
};

// Validates magic, version, config hash and the tensor table; throws
// CheckpointError on any mismatch.
LoadedCheckpoint deserialize_checkpoint(std::string_view bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pemv
