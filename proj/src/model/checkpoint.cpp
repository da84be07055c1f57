#include "c2pc/model/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <zlib.h>

#include "c2pc/csidata/container.hpp"
#include "c2pc/errors.hpp"

namespace c2pc::model {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'C', '2', 'P', 'C'};

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large checkpoints.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated checkpoint: expected ") + std::to_string(n) + " bytes of " + what, pos_);
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what).data(), sizeof(T));
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const nlohmann::json& extra_header,
                      const std::vector<dm::NamedTensor>& tensors) {
  nlohmann::json header = extra_header.is_object() ? extra_header : nlohmann::json::object();
  header["model"] = to_json(config);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    const auto v = t.data();
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    out.insert(out.end(), p, p + v.size_bytes());
  }
  put<std::uint32_t>(out, crc_of(out));

  // Write to a sibling file and rename so a crash never leaves a half-written checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  csi::write_file_bytes(tmp, out);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = csi::read_file_bytes(path);
  try {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
      throw FormatError("bad magic: not a C2PC checkpoint", 0);
    }
    if (bytes.size() < 8) throw FormatError("truncated checkpoint", bytes.size());
    const std::span<const std::uint8_t> all(bytes);
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    if (crc_of(all.first(bytes.size() - 4)) != stored) {
      throw FormatError("checkpoint checksum mismatch (file is corrupt)", bytes.size() - 4);
    }

    Reader r(all.first(bytes.size() - 4));
    r.take(4, "magic");
    const std::size_t version_at = r.pos();
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
    }
    const auto header_len = r.get<std::uint32_t>("header length");
    const std::size_t header_at = r.pos();
    const auto header_bytes = r.take(header_len, "header");
    CheckpointData data;
    try {
      data.header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
      data.config = model_config_from_json(data.header.at("model"));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed checkpoint header: ") + e.what(), header_at);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("invalid model configuration in checkpoint: ") + e.what(), header_at);
    }

    const auto count = r.get<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto name_len = r.get<std::uint32_t>("name length");
      const auto name_bytes = r.take(name_len, "name");
      std::string name(name_bytes.begin(), name_bytes.end());
      const std::size_t shape_at = r.pos();
      const auto rank = r.get<std::uint32_t>("rank");
      if (rank > 8) throw FormatError("implausible rank for tensor '" + name + "'", shape_at);
      dm::Shape shape(rank);
      std::uint64_t n = 1;
      for (auto& d : shape) {
        d = r.get<std::uint64_t>("dimension");
        if (d == 0 || n > (std::uint64_t{1} << 40) / d) {
          throw FormatError("implausible shape for tensor '" + name + "'", shape_at);
        }
        n *= d;
      }
      const auto payload = r.take(n * sizeof(double), "tensor payload");
      std::vector<double> values(n);
      std::memcpy(values.data(), payload.data(), payload.size());
      data.tensors.emplace_back(std::move(name), dm::Tensor::from(std::move(shape), std::move(values)));
    }
    if (r.pos() != bytes.size() - 4) throw FormatError("trailing bytes in checkpoint", r.pos());
    return data;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

void save_model(const std::filesystem::path& path, const Model& model) {
  write_checkpoint(path, model.config(), nlohmann::json::object(), model.params().tensors());
}

Model load_model(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  CheckpointData data = read_checkpoint(path);
  if (expected && !(*expected == data.config)) {
    throw ConfigError("checkpoint " + path.string() + " was written for model configuration " +
                      to_json(data.config).dump() + ", expected " + to_json(*expected).dump());
  }
  std::vector<dm::NamedTensor> params;
  for (const auto& entry : parameter_layout(data.config)) {
    auto it = std::find_if(data.tensors.begin(), data.tensors.end(), [&](const auto& nt) { return nt.first == entry.name; });
    if (it == data.tensors.end()) throw ConfigError("checkpoint " + path.string() + " lacks parameter '" + entry.name + "'");
    it->second.set_requires_grad(true);
    params.emplace_back(entry.name, it->second);
  }
  return Model(data.config, ModelParams(std::move(params)));
}

}  // namespace c2pc::model
