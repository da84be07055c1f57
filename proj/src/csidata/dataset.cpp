#include "c2pc/csidata/dataset.hpp"

#include <fstream>

#include "c2pc/csidata/container.hpp"
#include "c2pc/csidata/ply.hpp"
#include "c2pc/csidata/preprocess.hpp"
#include "c2pc/errors.hpp"

namespace c2pc::csi {
namespace {

constexpr const char* kFormat = "c2pc-manifest";

std::string required_string(const nlohmann::json& j, const char* key, std::size_t index) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw DataError("manifest entry " + std::to_string(index) + ": missing or empty string field '" + key + "'");
  }
  return it->get<std::string>();
}

ManifestEntry entry_from_json(const nlohmann::json& j, std::size_t index) {
  if (!j.is_object()) throw DataError("manifest entry " + std::to_string(index) + " is not an object");
  ManifestEntry e;
  e.csi = required_string(j, "csi", index);
  e.ply = required_string(j, "ply", index);
  nlohmann::json rest = j;
  rest.erase("csi");
  rest.erase("ply");
  if (auto it = j.find("id"); it != j.end()) {
    if (!it->is_string()) throw DataError("manifest entry " + std::to_string(index) + ": 'id' must be a string");
    e.id = it->get<std::string>();
    rest.erase("id");
  } else {
    e.id = std::filesystem::path(e.csi).stem().string();
  }
  if (auto it = j.find("split"); it != j.end()) {
    if (!it->is_string()) throw DataError("manifest entry " + std::to_string(index) + ": 'split' must be a string");
    e.split = it->get<std::string>();
    rest.erase("split");
  }
  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
      throw DataError("manifest entry " + std::to_string(index) + ": 'seed' must be a non-negative integer");
    }
    e.seed = it->get<std::uint64_t>();
    rest.erase("seed");
  } else {
    e.seed = index;
  }
  // subject/environment/action/frame share the container metadata rules.
  nlohmann::json meta = nlohmann::json::object();
  for (const char* key : {"subject", "environment", "action", "frame"}) {
    if (auto it = rest.find(key); it != rest.end()) {
      meta[key] = *it;
      rest.erase(key);
    }
  }
  try {
    e.meta = meta_from_json(meta);
  } catch (const DataError& err) {
    throw DataError("manifest entry " + std::to_string(index) + ": " + err.what());
  }
  e.extra = std::move(rest);
  return e;
}

}  // namespace

nlohmann::json to_json(const Manifest& manifest) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json j = e.extra.is_object() ? e.extra : nlohmann::json::object();
    j["id"] = e.id;
    j["csi"] = e.csi;
    j["ply"] = e.ply;
    j["split"] = e.split;
    j["seed"] = e.seed;
    const nlohmann::json meta = to_json(e.meta);
    for (const auto& [k, v] : meta.items()) j[k] = v;
    entries.push_back(std::move(j));
  }
  return {{"format", kFormat},
          {"version", kManifestVersion},
          {"seed", manifest.seed},
          {"generator", manifest.generator},
          {"entries", std::move(entries)}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("manifest must be a JSON object");
  if (auto it = j.find("format"); it != j.end() && *it != kFormat) {
    throw DataError("not a c2pc manifest (format " + it->dump() + ")");
  }
  if (auto it = j.find("version"); it != j.end() && *it != kManifestVersion) {
    throw DataError("unsupported manifest version " + it->dump());
  }
  auto entries = j.find("entries");
  if (entries == j.end() || !entries->is_array()) throw DataError("manifest has no 'entries' array");
  Manifest m;
  if (auto it = j.find("seed"); it != j.end() && it->is_number_integer()) m.seed = it->get<std::uint64_t>();
  if (auto it = j.find("generator"); it != j.end()) m.generator = *it;
  for (std::size_t i = 0; i < entries->size(); ++i) m.entries.push_back(entry_from_json((*entries)[i], i));
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(manifest).dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

std::vector<Example> load_examples(const Manifest& manifest, const std::filesystem::path& base_dir,
                                   const std::string& split, std::size_t points) {
  if (points == 0) throw ConfigError("load_examples: point count must be positive");
  std::vector<Example> out;
  for (const auto& e : manifest.entries) {
    if (!split.empty() && e.split != split) continue;
    const auto csi_path = base_dir / e.csi;
    const auto ply_path = base_dir / e.ply;
    Example ex;
    ex.id = e.id;
    try {
      ex.input = preprocess(load_csi_container(csi_path));
    } catch (const DataError& err) {
      throw DataError(csi_path.string() + ": " + err.what());
    }
    try {
      ex.cloud = read_ply(ply_path);
      validate(ex.cloud);
    } catch (const DataError& err) {
      throw DataError(ply_path.string() + ": " + err.what());
    }
    if (ex.cloud.size() != points) ex.cloud = resample_cloud(ex.cloud, points, e.seed);
    ex.target = cloud_to_tensor(ex.cloud);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> load_split(const std::filesystem::path& dir, const std::string& split, std::size_t points) {
  return load_examples(read_manifest(dir / "manifest.json"), dir, split, points);
}

}  // namespace c2pc::csi
