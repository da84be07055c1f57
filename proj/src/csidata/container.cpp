#include "c2pc/csidata/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include "c2pc/errors.hpp"

namespace c2pc::csi {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

constexpr char kMagic[4] = {'C', 'S', 'I', '1'};
// Guards allocations driven by a corrupt header; far above any real CSI window.
constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 32;

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  v = to_little(v);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated CSI container: expected ") + std::to_string(n) + " bytes of " + what +
                            ", " + std::to_string(bytes_.size() - pos_) + " available",
                        pos_);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return to_little(v);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json to_json(const CsiMeta& meta) {
  nlohmann::json j = meta.extra.is_object() ? meta.extra : nlohmann::json::object();
  j["subject"] = meta.subject;
  j["environment"] = meta.environment;
  j["action"] = meta.action;
  j["frame"] = meta.frame;
  return j;
}

CsiMeta meta_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("CSI metadata must be a JSON object");
  CsiMeta m;
  nlohmann::json extra = j;
  auto take_string = [&](const char* key, std::string& dst) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_string()) throw DataError(std::string("CSI metadata field '") + key + "' must be a string");
      dst = it->get<std::string>();
      extra.erase(key);
    }
  };
  take_string("subject", m.subject);
  take_string("environment", m.environment);
  take_string("action", m.action);
  if (auto it = j.find("frame"); it != j.end()) {
    if (!it->is_number_integer()) throw DataError("CSI metadata field 'frame' must be an integer");
    m.frame = it->get<std::int64_t>();
    extra.erase("frame");
  }
  m.extra = std::move(extra);
  return m;
}

CsiSample CsiSample::zeros(std::uint32_t antennas, std::uint32_t subcarriers, std::uint32_t slices) {
  CsiSample s;
  s.antennas = antennas;
  s.subcarriers = subcarriers;
  s.slices = slices;
  s.amplitude.assign(s.size(), 0.0f);
  s.phase.assign(s.size(), 0.0f);
  return s;
}

void validate(const CsiSample& sample) {
  if (sample.antennas == 0 || sample.subcarriers == 0 || sample.slices == 0) {
    throw DataError("CSI sample dimensions must be positive");
  }
  if (sample.amplitude.size() != sample.size() || sample.phase.size() != sample.size()) {
    throw DataError("CSI sample arrays do not match A x S x T = " + std::to_string(sample.size()));
  }
  const float pi = static_cast<float>(std::numbers::pi);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (!std::isfinite(sample.amplitude[i]) || sample.amplitude[i] < 0.0f) {
      throw DataError("CSI amplitude must be finite and non-negative (entry " + std::to_string(i) + ")");
    }
    if (!std::isfinite(sample.phase[i]) || sample.phase[i] < -pi || sample.phase[i] > pi) {
      throw DataError("CSI phase must be wrapped into [-pi, pi] (entry " + std::to_string(i) + ")");
    }
  }
}

std::vector<std::uint8_t> encode_csi_container(const CsiSample& sample) {
  validate(sample);
  const std::string meta = to_json(sample.meta).dump();
  std::vector<std::uint8_t> out;
  out.reserve(24 + 8 * sample.size() + meta.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kContainerVersion);
  put_u32(out, sample.antennas);
  put_u32(out, sample.subcarriers);
  put_u32(out, sample.slices);
  for (float v : sample.amplitude) put_f32(out, v);
  for (float v : sample.phase) put_f32(out, v);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  return out;
}

CsiSample decode_csi_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("bad magic: not a CSI1 container", 0);
  const std::size_t version_at = r.pos();
  const std::uint32_t version = r.u32("version");
  if (version != kContainerVersion) {
    throw FormatError("unsupported CSI container version " + std::to_string(version), version_at);
  }
  const std::size_t shape_at = r.pos();
  CsiSample s;
  s.antennas = r.u32("antenna count");
  s.subcarriers = r.u32("subcarrier count");
  s.slices = r.u32("time slice count");
  if (s.antennas == 0 || s.subcarriers == 0 || s.slices == 0) {
    throw FormatError("CSI container declares an empty dimension", shape_at);
  }
  const std::uint64_t entries = std::uint64_t{s.antennas} * s.subcarriers * s.slices;
  if (entries / s.slices / s.subcarriers != s.antennas || entries > kMaxEntries) {
    throw FormatError("CSI container shape overflows (" + std::to_string(s.antennas) + " x " +
                          std::to_string(s.subcarriers) + " x " + std::to_string(s.slices) + ")",
                      shape_at);
  }
  // Check the payload fits before allocating for it.
  r.need(entries * 8, "amplitude/phase payload");
  s.amplitude.resize(entries);
  s.phase.resize(entries);
  for (auto& v : s.amplitude) v = r.f32("amplitude");
  for (auto& v : s.phase) v = r.f32("phase");
  const std::uint32_t meta_len = r.u32("metadata length");
  const std::size_t meta_at = r.pos();
  const auto meta = r.take(meta_len, "metadata");
  if (r.remaining() != 0) throw FormatError("trailing bytes after CSI container metadata", r.pos());
  try {
    const auto j = nlohmann::json::parse(meta.begin(), meta.end());
    s.meta = meta_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed CSI metadata JSON: ") + e.what(), meta_at);
  } catch (const DataError& e) {
    throw FormatError(e.what(), meta_at);
  }
  try {
    validate(s);
  } catch (const DataError& e) {
    throw FormatError(e.what(), 20);
  }
  return s;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void save_csi_container(const CsiSample& sample, const std::filesystem::path& path) {
  write_file_bytes(path, encode_csi_container(sample));
}

CsiSample load_csi_container(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_csi_container(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace c2pc::csi
