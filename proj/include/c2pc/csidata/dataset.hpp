#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/csidata/csi_sample.hpp"
#include "c2pc/csidata/point_cloud.hpp"

namespace c2pc::csi {

// Dataset manifest (JSON), shared by the synthetic generator and external converters:
//   {"format": "c2pc-manifest", "version": 1, "seed": root seed (optional),
//    "generator": {free-form provenance and configuration},
//    "entries": [{"id", "csi", "ply", "split", "seed", "subject", "environment", "action", "frame", ...}]}
// `csi` and `ply` are paths relative to the manifest's directory; `split` is "train", "val" or "test".
inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
  std::string id;
  std::string csi;
  std::string ply;
  std::string split = "train";
  std::uint64_t seed = 0;  // resampling seed when the cloud size differs from the model's
  CsiMeta meta;
  nlohmann::json extra = nlohmann::json::object();  // unrecognised keys, preserved

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::uint64_t seed = 0;
  nlohmann::json generator = nlohmann::json::object();
  std::vector<ManifestEntry> entries;

  bool operator==(const Manifest&) const = default;
};

nlohmann::json to_json(const Manifest& manifest);
/// Throws DataError on a malformed manifest or an unknown version.
Manifest manifest_from_json(const nlohmann::json& j);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// One loaded training/evaluation pair.
struct Example {
  std::string id;
  ModelInput input;
  PointCloud cloud;   // exactly `points` points
  dm::Tensor target;  // the same cloud as [points x 3]
};

/// Loads every entry of `split` (all entries when `split` is empty). Clouds whose size
/// differs from `points` are resampled with the entry's seed. Paths resolve against
/// `base_dir`. Throws DataError naming the offending file.
std::vector<Example> load_examples(const Manifest& manifest, const std::filesystem::path& base_dir,
                                   const std::string& split, std::size_t points);

/// Reads `<dir>/manifest.json` and loads the requested split.
std::vector<Example> load_split(const std::filesystem::path& dir, const std::string& split, std::size_t points);

}  // namespace c2pc::csi
