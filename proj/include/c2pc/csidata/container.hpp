#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "c2pc/csidata/csi_sample.hpp"

namespace c2pc::csi {

// Little-endian CSI container:
//   "CSI1" | u32 version (=1) | u32 A | u32 S | u32 T
//   | A*S*T f32 amplitude | A*S*T f32 wrapped phase | u32 n | n bytes UTF-8 JSON metadata
inline constexpr std::uint32_t kContainerVersion = 1;

std::vector<std::uint8_t> encode_csi_container(const CsiSample& sample);
/// Throws FormatError (carrying the byte offset) on bad magic, unsupported version,
/// implausible shapes, truncation, trailing bytes, or malformed metadata.
CsiSample decode_csi_container(std::span<const std::uint8_t> bytes);

void save_csi_container(const CsiSample& sample, const std::filesystem::path& path);
CsiSample load_csi_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace c2pc::csi
