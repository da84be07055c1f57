#include "c2pc/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <numbers>
#include <random>
#include <string>

#include "c2pc/csidata/container.hpp"
#include "c2pc/csidata/ply.hpp"
#include "c2pc/csidata/preprocess.hpp"
#include "c2pc/errors.hpp"

namespace c2pc::synth {
namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Portable draws (the std distributions are implementation-defined).
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }
double normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - unit(rng);  // (0, 1]
  const double u2 = unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

// float32 of a phase in (-pi, pi], kept inside that interval: float(pi) itself exceeds pi.
float stored_phase(double wrapped) {
  constexpr float kLimit = 3.14159250f;  // largest float below pi
  return std::clamp(static_cast<float>(wrapped), -kLimit, kLimit);
}

double distance(const Point3& a, const Point3& b) { return std::sqrt(squared_distance(a, b)); }

bool inside(const Point3& p, double w, double d, double h) {
  return p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= d && p[2] >= 0.0 && p[2] <= h;
}

std::vector<Point3> rx_positions(const SceneConfig& c) {
  std::vector<Point3> rx;
  for (std::size_t a = 0; a < c.antennas; ++a) {
    const double offset = (static_cast<double>(a) - 0.5 * static_cast<double>(c.antennas - 1)) * c.rx_spacing;
    rx.push_back({c.rx_center[0], c.rx_center[1] + offset, c.rx_center[2]});
  }
  return rx;
}

nlohmann::json point_json(const Point3& p) { return nlohmann::json::array({p[0], p[1], p[2]}); }

Point3 point_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
    throw ConfigError("synth." + key + " must be an array of three numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void SceneConfig::validate() const {
  if (!(width > 0.0 && depth > 0.0 && height > 0.0)) throw ConfigError("room extents must be positive");
  if (!(semi_axes[0] > 0.0 && semi_axes[1] > 0.0 && semi_axes[2] > 0.0)) {
    throw ConfigError("person semi-axes must be positive");
  }
  if (region_x0 > region_x1 || region_y0 > region_y1) throw ConfigError("person region bounds are reversed");
  if (!(max_drift >= 0.0)) throw ConfigError("max_drift must be non-negative");
  const double mx = semi_axes[0] + 0.5 * max_drift, my = semi_axes[1] + 0.5 * max_drift;
  if (region_x0 < mx || region_x1 > width - mx || region_y0 < my || region_y1 > depth - my ||
      2.0 * semi_axes[2] > height) {
    throw ConfigError("person region (including the ellipsoid and its drift) leaves the room");
  }
  if (antennas == 0) throw ConfigError("at least one receive antenna is required");
  if (room_points + person_points == 0) throw ConfigError("the scene needs at least one cloud point");
  if (!inside(tx, width, depth, height)) throw ConfigError("transmitter lies outside the room");
  for (const auto& r : rx_positions(*this)) {
    if (!inside(r, width, depth, height)) throw ConfigError("receive antenna lies outside the room");
  }
}

void RfConfig::validate() const {
  if (!(center_hz > 0.0 && bandwidth_hz > 0.0)) throw ConfigError("centre frequency and bandwidth must be positive");
  if (subcarriers == 0) throw ConfigError("at least one subcarrier is required");
  if (!(bandwidth_hz < 2.0 * center_hz)) throw ConfigError("bandwidth too wide for the centre frequency");
  if (!(attenuation_exponent >= 0.0)) throw ConfigError("attenuation exponent must be non-negative");
  if (!(noise_std >= 0.0)) throw ConfigError("noise std must be non-negative");
}

double RfConfig::frequency(std::size_t s) const {
  const double spacing = bandwidth_hz / static_cast<double>(subcarriers);
  return center_hz + (static_cast<double>(s) - 0.5 * static_cast<double>(subcarriers)) * spacing;
}

void DatasetConfig::validate() const {
  if (n == 0) throw ConfigError("dataset size must be at least 1");
  if (slices == 0) throw ConfigError("slices must be at least 1");
  if (points == 0) throw ConfigError("points must be at least 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  scene.validate();
  rf.validate();
}

nlohmann::json to_json(const SceneConfig& c) {
  return {{"width", c.width},         {"depth", c.depth},
          {"height", c.height},       {"semi_axes", point_json(c.semi_axes)},
          {"region_x0", c.region_x0}, {"region_x1", c.region_x1},
          {"region_y0", c.region_y0}, {"region_y1", c.region_y1},
          {"tx", point_json(c.tx)},   {"rx_center", point_json(c.rx_center)},
          {"rx_spacing", c.rx_spacing}, {"antennas", c.antennas},
          {"room_points", c.room_points}, {"person_points", c.person_points},
          {"max_drift", c.max_drift}};
}

nlohmann::json to_json(const RfConfig& c) {
  return {{"center_hz", c.center_hz},
          {"bandwidth_hz", c.bandwidth_hz},
          {"subcarriers", c.subcarriers},
          {"attenuation_exponent", c.attenuation_exponent},
          {"wall_reflections", c.wall_reflections},
          {"noise_std", c.noise_std}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("scene configuration must be a JSON object");
  SceneConfig c;
  for (const auto& [key, value] : j.items()) {
    auto real = [&](double& dst) {
      if (!value.is_number()) throw ConfigError("synth." + key + " must be a number");
      dst = value.get<double>();
    };
    auto count = [&](std::size_t& dst) {
      if (!value.is_number_unsigned()) throw ConfigError("synth." + key + " must be a non-negative integer");
      dst = value.get<std::size_t>();
    };
    if (key == "width") real(c.width);
    else if (key == "depth") real(c.depth);
    else if (key == "height") real(c.height);
    else if (key == "semi_axes") c.semi_axes = point_from_json(value, key);
    else if (key == "region_x0") real(c.region_x0);
    else if (key == "region_x1") real(c.region_x1);
    else if (key == "region_y0") real(c.region_y0);
    else if (key == "region_y1") real(c.region_y1);
    else if (key == "tx") c.tx = point_from_json(value, key);
    else if (key == "rx_center") c.rx_center = point_from_json(value, key);
    else if (key == "rx_spacing") real(c.rx_spacing);
    else if (key == "antennas") count(c.antennas);
    else if (key == "room_points") count(c.room_points);
    else if (key == "person_points") count(c.person_points);
    else if (key == "max_drift") real(c.max_drift);
    else throw ConfigError("unknown scene configuration key '" + key + "'");
  }
  c.validate();
  return c;
}

RfConfig rf_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("RF configuration must be a JSON object");
  RfConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "subcarriers") {
      if (!value.is_number_unsigned()) throw ConfigError("rf.subcarriers must be a non-negative integer");
      c.subcarriers = value.get<std::size_t>();
    } else if (key == "wall_reflections") {
      if (!value.is_boolean()) throw ConfigError("rf.wall_reflections must be a boolean");
      c.wall_reflections = value.get<bool>();
    } else {
      double* dst = key == "center_hz"              ? &c.center_hz
                    : key == "bandwidth_hz"         ? &c.bandwidth_hz
                    : key == "attenuation_exponent" ? &c.attenuation_exponent
                    : key == "noise_std"            ? &c.noise_std
                                                    : nullptr;
      if (!dst) throw ConfigError("unknown RF configuration key '" + key + "'");
      if (!value.is_number()) throw ConfigError("rf." + key + " must be a number");
      *dst = value.get<double>();
    }
  }
  c.validate();
  return c;
}

Point3 Scene::person_at(std::size_t slice, std::size_t slices) const {
  if (slices <= 1) return person_center;
  const double s = static_cast<double>(slice) / static_cast<double>(slices - 1) - 0.5;
  return {person_center[0] + s * drift[0], person_center[1] + s * drift[1], person_center[2] + s * drift[2]};
}

std::pair<Scene, PointCloud> generate_scene(std::uint64_t seed, const SceneConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed);
  Scene scene;
  scene.width = config.width;
  scene.depth = config.depth;
  scene.height = config.height;
  scene.semi_axes = config.semi_axes;
  scene.tx = config.tx;
  scene.rx = rx_positions(config);
  scene.person_center = {uniform(rng, config.region_x0, config.region_x1),
                         uniform(rng, config.region_y0, config.region_y1), config.semi_axes[2]};
  const double heading = uniform(rng, 0.0, kTwoPi);
  const double length = uniform(rng, 0.0, config.max_drift);
  scene.drift = {length * std::cos(heading), length * std::sin(heading), 0.0};

  const double W = config.width, D = config.depth, H = config.height;
  // Floor, then the walls at y = 0, y = D, x = 0, x = W.
  const double areas[5] = {W * D, W * H, W * H, D * H, D * H};
  const double total = areas[0] + areas[1] + areas[2] + areas[3] + areas[4];
  PointCloud cloud;
  cloud.points.reserve(config.room_points + config.person_points);
  for (std::size_t i = 0; i < config.room_points; ++i) {
    double pick = unit(rng) * total;
    std::size_t face = 0;
    while (face < 4 && pick >= areas[face]) pick -= areas[face++];
    const double u = unit(rng), v = unit(rng);
    switch (face) {
      case 0: cloud.points.push_back({u * W, v * D, 0.0}); break;
      case 1: cloud.points.push_back({u * W, 0.0, v * H}); break;
      case 2: cloud.points.push_back({u * W, D, v * H}); break;
      case 3: cloud.points.push_back({0.0, u * D, v * H}); break;
      default: cloud.points.push_back({W, u * D, v * H}); break;
    }
  }
  const Point3& c = scene.person_center;
  const Point3& r = config.semi_axes;
  for (std::size_t i = 0; i < config.person_points; ++i) {
    const double z = uniform(rng, -1.0, 1.0);
    const double phi = uniform(rng, 0.0, kTwoPi);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    cloud.points.push_back({c[0] + r[0] * rho * std::cos(phi), c[1] + r[1] * rho * std::sin(phi), c[2] + r[2] * z});
  }
  return {std::move(scene), std::move(cloud)};
}

std::vector<Path> propagation_paths(const Scene& scene, const Point3& rx, const Point3& person, const RfConfig& rf) {
  const double to_person = distance(scene.tx, person);
  const double from_person = distance(person, rx);
  if (!(to_person > 0.0) || !(from_person > 0.0)) {
    throw ConfigError("propagation path of zero length (scatterer coincides with a radio)");
  }
  std::vector<double> lengths{distance(scene.tx, rx), to_person + from_person};
  if (rf.wall_reflections) {
    const Point3& t = scene.tx;
    const Point3 images[6] = {{-t[0], t[1], t[2]}, {2.0 * scene.width - t[0], t[1], t[2]},
                              {t[0], -t[1], t[2]}, {t[0], 2.0 * scene.depth - t[1], t[2]},
                              {t[0], t[1], -t[2]}, {t[0], t[1], 2.0 * scene.height - t[2]}};
    for (const auto& img : images) lengths.push_back(distance(img, rx));
  }
  std::vector<Path> paths;
  for (double L : lengths) {
    if (!(L > 0.0)) throw ConfigError("propagation path of zero length (coincident transmitter, receiver or scatterer)");
    paths.push_back({L, std::pow(L, -rf.attenuation_exponent)});
  }
  return paths;
}

csi::CsiSample simulate_csi(const Scene& scene, const RfConfig& rf, std::size_t slices, std::uint64_t noise_seed) {
  rf.validate();
  if (slices == 0) throw ConfigError("slices must be at least 1");
  if (scene.rx.empty()) throw ConfigError("scene has no receive antennas");
  auto sample = csi::CsiSample::zeros(static_cast<std::uint32_t>(scene.rx.size()),
                                      static_cast<std::uint32_t>(rf.subcarriers), static_cast<std::uint32_t>(slices));
  std::mt19937_64 rng(noise_seed);
  for (std::size_t a = 0; a < scene.rx.size(); ++a) {
    for (std::size_t t = 0; t < slices; ++t) {
      const auto paths = propagation_paths(scene, scene.rx[a], scene.person_at(t, slices), rf);
      for (std::size_t s = 0; s < rf.subcarriers; ++s) {
        const double k = kTwoPi * rf.frequency(s) / kSpeedOfLight;
        std::complex<double> h = 0.0;
        for (const auto& p : paths) h += p.gain * std::polar(1.0, -k * p.length);
        if (rf.noise_std > 0.0) h += std::complex<double>(rf.noise_std * normal(rng), rf.noise_std * normal(rng));
        const std::size_t i = sample.offset(a, s, t);
        sample.amplitude[i] = static_cast<float>(std::abs(h));
        sample.phase[i] = stored_phase(csi::wrap_phase(std::arg(h)));
      }
    }
  }
  return sample;
}

std::uint64_t sample_seed(std::uint64_t root, std::size_t index) {
  return splitmix64(root + 0x632be59bd9b4e019ull * (static_cast<std::uint64_t>(index) + 1));
}

csi::Manifest make_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  const std::size_t val_count = static_cast<std::size_t>(std::floor(static_cast<double>(config.n) * config.val_fraction));
  const std::size_t width = std::max<std::size_t>(4, std::to_string(config.n - 1).size());
  csi::Manifest manifest;
  manifest.seed = config.seed;
  manifest.generator = {{"name", "c2pc synth"},
                        {"slices", config.slices},
                        {"points", config.points},
                        {"val_fraction", config.val_fraction},
                        {"scene", to_json(config.scene)},
                        {"rf", to_json(config.rf)}};
  manifest.entries.resize(config.n);
  std::vector<std::exception_ptr> errors(config.n);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < config.n; ++i) {
    try {
      const std::uint64_t seed = sample_seed(config.seed, i);
      auto [scene, cloud] = generate_scene(seed, config.scene);
      csi::CsiSample sample = simulate_csi(scene, config.rf, config.slices, splitmix64(seed));
      std::string stem = std::to_string(i);
      stem = "sample_" + std::string(width - stem.size(), '0') + stem;
      sample.meta.subject = "synthetic";
      sample.meta.environment = "synthetic-room";
      sample.meta.action = "stand";
      sample.meta.frame = static_cast<std::int64_t>(i);
      sample.meta.extra = {{"seed", seed}, {"person_center", point_json(scene.person_center)}};
      csi::save_csi_container(sample, out_dir / (stem + ".csi"));
      csi::write_ply(csi::resample_cloud(cloud, config.points, seed), out_dir / (stem + ".ply"));

      csi::ManifestEntry& e = manifest.entries[i];
      e.id = stem;
      e.csi = stem + ".csi";
      e.ply = stem + ".ply";
      e.split = i >= config.n - val_count ? "val" : "train";
      e.seed = seed;
      e.meta = sample.meta;
      e.meta.extra = nlohmann::json::object();
      e.extra = {{"person_center", point_json(scene.person_center)}};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  csi::write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace c2pc::synth
