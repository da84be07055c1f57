#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/diffmath/grad_check.hpp"
#include "c2pc/model/model.hpp"

namespace c2pc::model {

// Little-endian checkpoint:
//   "C2PC" | u32 version | u32 n | n bytes JSON header {"model": ModelConfig, ...}
//   | u32 tensor count | per tensor: u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
//     float64 payload | u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  ModelConfig config;
  nlohmann::json header;  // the full header, including "model"
  std::vector<dm::NamedTensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const nlohmann::json& extra_header,
                      const std::vector<dm::NamedTensor>& tensors);

/// Throws FormatError on bad magic, unknown version, truncation or checksum mismatch.
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Model parameters only (the header's extra fields and non-parameter tensors are ignored).
void save_model(const std::filesystem::path& path, const Model& model);
/// Rejects a checkpoint whose configuration differs from `expected` when given, or
/// whose tensors do not match the configuration's parameter set.
Model load_model(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace c2pc::model
