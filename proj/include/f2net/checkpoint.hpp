#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2net/image_io.hpp"
#include "f2net/model.hpp"

// Binary checkpoint container, little-endian throughout:
//
//   "F2NT" | u32 version | u64 config digest | u32 epoch | u8 scalar bytes
//   u32 config text length | config text
//   u32 parameter count
//   per parameter: u32 name length | name | u32 rank | u32 dims[rank] | values

namespace f2net {

inline constexpr char kCheckpointMagic[4] = {'F', '2', 'N', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t digest = 0;
  std::uint32_t epoch = 0;
  std::uint8_t scalar_bytes = 8;
  std::string config_text;
};

namespace detail {

template <typename U>
void put(std::string& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
    auto bytes = std::bit_cast<std::array<char, sizeof(U)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    out.append(bytes.data(), bytes.size());
  } else {
    char bytes[sizeof(U)];
    std::memcpy(bytes, &value, sizeof(U));
    out.append(bytes, sizeof(U));
  }
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    char bytes[sizeof(U)];
    std::memcpy(bytes, &data_[pos_], sizeof(U));
    if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) std::reverse(bytes, bytes + sizeof(U));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw DataError("checkpoint truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

inline void parse_model_config_line(ModelConfig& cfg, const std::string& key, const std::string& value) {
  auto as_size = [&] { return static_cast<std::size_t>(std::stoull(value)); };
  if (key == "stage2_channels") cfg.stage2_channels = as_size();
  else if (key == "stage4_channels") cfg.stage4_channels = as_size();
  else if (key == "channels") cfg.channels = as_size();
  else if (key == "center_channels") cfg.center_channels = as_size();
  else if (key == "decoder_channels") cfg.decoder_channels = as_size();
  else if (key == "reduction") cfg.reduction = as_size();
  else if (key == "matching") cfg.matching = parse_matching_mode(value);
  else if (key == "fusion") cfg.fusion = parse_fusion_mode(value);
  else if (key == "strategy") cfg.strategy = parse_center_strategy(value);
  else if (key == "top_k") cfg.center.top_k = as_size();
  else if (key == "history") cfg.center.history = as_size();
  else if (key == "nms_window") cfg.center.nms_window = as_size();
  else if (key == "sigma_gt") cfg.center.sigma_gt = std::stod(value);
  else if (key == "sigma_match") cfg.sigma_match = std::stod(value);
  else throw DataError("unknown config key '" + key + "'");
}

}  // namespace detail

/// Rebuilds a ModelConfig from its canonical to_text() form.
inline ModelConfig model_config_from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    detail::parse_model_config_line(cfg, line.substr(0, eq), line.substr(eq + 3));
  }
  return cfg;
}

template <typename T>
std::string serialize_checkpoint(const Model<T>& model, std::uint32_t epoch) {
  std::string out(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, model.config.digest());
  detail::put<std::uint32_t>(out, epoch);
  detail::put<std::uint8_t>(out, sizeof(T));
  const std::string text = model.config.to_text();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const auto params = model.params();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (T v : t.data()) detail::put<T>(out, v);
  }
  return out;
}

/// Header fields only; lets callers pick the scalar type before loading.
inline CheckpointHeader read_checkpoint_header(const std::string& bytes) {
  detail::Reader in(bytes);
  if (in.bytes(4) != std::string(kCheckpointMagic, 4)) throw DataError("checkpoint: bad magic");
  CheckpointHeader h;
  h.version = in.get<std::uint32_t>();
  if (h.version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(h.version));
  h.digest = in.get<std::uint64_t>();
  h.epoch = in.get<std::uint32_t>();
  h.scalar_bytes = in.get<std::uint8_t>();
  h.config_text = in.bytes(in.get<std::uint32_t>());
  return h;
}

template <typename T>
Model<T> deserialize_checkpoint(const std::string& bytes, CheckpointHeader* header_out = nullptr) {
  detail::Reader in(bytes);
  const auto header = read_checkpoint_header(bytes);
  in.bytes(4 + 4 + 8 + 4 + 1 + 4 + header.config_text.size());
  if (header.scalar_bytes != sizeof(T)) {
    throw DataError("checkpoint holds " + std::to_string(header.scalar_bytes * 8) + "-bit values, expected " +
                    std::to_string(sizeof(T) * 8));
  }
  const ModelConfig cfg = model_config_from_text(header.config_text);
  if (cfg.digest() != header.digest) throw DataError("checkpoint: config digest mismatch");
  Model<T> model = Model<T>::create(cfg, 0);
  auto params = model.params();
  const auto count = in.get<std::uint32_t>();
  if (count != params.size()) {
    throw DataError("checkpoint: " + std::to_string(count) + " parameters, model has " + std::to_string(params.size()));
  }
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = in.bytes(in.get<std::uint32_t>());
    auto it = params.find(name);
    if (it == params.end()) throw DataError("checkpoint: unknown parameter '" + name + "'");
    Shape shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = in.get<std::uint32_t>();
    if (shape != it->second.shape()) {
      throw DataError("checkpoint: parameter '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                      shape_string(it->second.shape()));
    }
    auto values = it->second.mutable_data();
    for (auto& v : values) v = in.get<T>();
  }
  if (!in.done()) throw DataError("checkpoint: trailing bytes");
  if (header_out) *header_out = header;
  return model;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, std::uint32_t epoch) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    const auto bytes = serialize_checkpoint(model, epoch);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, CheckpointHeader* header_out = nullptr) {
  return deserialize_checkpoint<T>(read_file_bytes(path), header_out);
}

}  // namespace f2net
