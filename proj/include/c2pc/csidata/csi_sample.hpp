#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/diffmath/tensor.hpp"

namespace c2pc::csi {

struct CsiMeta {
  std::string subject;
  std::string environment;
  std::string action;
  std::int64_t frame = 0;
  // Any further keys found in a container's metadata blob, preserved verbatim.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const CsiMeta&) const = default;
};

nlohmann::json to_json(const CsiMeta& meta);
CsiMeta meta_from_json(const nlohmann::json& j);

/// One CSI window. Amplitude (linear magnitude) and wrapped phase (radians) are stored
/// antenna-major, then subcarrier, then time, exactly as in the container file.
struct CsiSample {
  std::uint32_t antennas = 0;
  std::uint32_t subcarriers = 0;
  std::uint32_t slices = 0;
  std::vector<float> amplitude;
  std::vector<float> phase;
  CsiMeta meta;

  std::size_t size() const { return std::size_t{antennas} * subcarriers * slices; }
  std::size_t offset(std::size_t a, std::size_t s, std::size_t t) const { return (a * subcarriers + s) * slices + t; }

  static CsiSample zeros(std::uint32_t antennas, std::uint32_t subcarriers, std::uint32_t slices);

  bool operator==(const CsiSample&) const = default;
};

/// Throws DataError if shapes are inconsistent, amplitudes negative, or any value
/// non-finite / phase outside the float32 image of [-pi, pi].
void validate(const CsiSample& sample);

/// Model-ready input: features [F x 2 x T] with F = A * S (channel 0 amplitude,
/// channel 1 phase) and the antenna/subcarrier index of every row.
struct ModelInput {
  dm::Tensor features;
  std::vector<std::size_t> antenna_index;
  std::vector<std::size_t> subcarrier_index;

  std::size_t pairs() const { return antenna_index.size(); }
  std::size_t slices() const { return features.dim(2); }
};

}  // namespace c2pc::csi
