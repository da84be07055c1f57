#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "c2pc/csidata/csi_sample.hpp"
#include "c2pc/csidata/dataset.hpp"
#include "c2pc/csidata/point_cloud.hpp"

namespace c2pc::synth {

/// Room-frame coordinates in metres: x in [0, width], y in [0, depth], z in [0, height], floor at z = 0.
struct SceneConfig {
  double width = 8.5;
  double depth = 7.8;
  double height = 3.0;
  Point3 semi_axes{0.25, 0.25, 0.9};  // person ellipsoid, standing on the floor
  // Horizontal region the person centre is drawn from.
  double region_x0 = 2.0, region_x1 = 6.5;
  double region_y0 = 1.5, region_y1 = 6.3;
  Point3 tx{0.5, 3.9, 1.0};
  Point3 rx_center{8.0, 3.9, 1.0};
  double rx_spacing = 0.03;  // along y, about half a wavelength at 5 GHz
  std::size_t antennas = 3;
  std::size_t room_points = 600;    // floor and walls, area weighted
  std::size_t person_points = 900;  // ellipsoid surface
  double max_drift = 0.1;           // person displacement across a CSI window

  /// ConfigError when the person region (with the ellipsoid around it) or the radios leave the room.
  void validate() const;
  bool operator==(const SceneConfig&) const = default;
};

struct Scene {
  double width = 0.0, depth = 0.0, height = 0.0;
  Point3 person_center{};
  Point3 semi_axes{};
  Point3 drift{};  // horizontal; slice t sits at centre + drift * (t / (T - 1) - 1/2)
  Point3 tx{};
  std::vector<Point3> rx;

  Point3 person_at(std::size_t slice, std::size_t slices) const;
  bool operator==(const Scene&) const = default;
};

struct RfConfig {
  double center_hz = 5e9;
  double bandwidth_hz = 40e6;
  std::size_t subcarriers = 114;
  double attenuation_exponent = 2.0;  // alpha = 1 / length^exponent
  bool wall_reflections = true;       // the six first-order image sources
  double noise_std = 1e-4;            // per real/imaginary component

  void validate() const;
  /// f_s = f_c + (s - S/2) * (bandwidth / S)
  double frequency(std::size_t s) const;
  bool operator==(const RfConfig&) const = default;
};

nlohmann::json to_json(const SceneConfig& c);
nlohmann::json to_json(const RfConfig& c);
SceneConfig scene_config_from_json(const nlohmann::json& j);
RfConfig rf_config_from_json(const nlohmann::json& j);

/// Draws the person centre uniformly from the configured region and a drift of random
/// heading and length in [0, max_drift]; returns the scene and its ground-truth cloud
/// (room_points on floor and walls, then person_points on the ellipsoid surface).
std::pair<Scene, PointCloud> generate_scene(std::uint64_t seed, const SceneConfig& config);

struct Path {
  double length;  // metres
  double gain;    // alpha
};

/// Line of sight, the person scatter path (via the ellipsoid centre) and, if enabled, the
/// six first-order wall reflections between `tx` and `rx`. ConfigError on a zero-length path.
std::vector<Path> propagation_paths(const Scene& scene, const Point3& rx, const Point3& person, const RfConfig& rf);

/// H(a, s) = sum_k alpha_k exp(-j 2 pi f_s L_k / c) per slice, plus complex Gaussian noise
/// drawn from `noise_seed`; stored as amplitude and phase wrapped into (-pi, pi].
csi::CsiSample simulate_csi(const Scene& scene, const RfConfig& rf, std::size_t slices, std::uint64_t noise_seed);

struct DatasetConfig {
  std::size_t n = 64;
  std::uint64_t seed = 0;
  std::size_t slices = 10;
  std::size_t points = 1200;   // PLY size after resampling
  double val_fraction = 0.25;  // the last floor(n * val_fraction) samples form the validation split
  SceneConfig scene;
  RfConfig rf;

  void validate() const;
};

/// Per-sample seed: a bijective mix of (root seed, index), so two roots never share one.
std::uint64_t sample_seed(std::uint64_t root, std::size_t index);

/// Writes sample_XXXX.csi / sample_XXXX.ply pairs and manifest.json into `out_dir`.
/// Identical configurations produce byte-identical files.
csi::Manifest make_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

}  // namespace c2pc::synth
