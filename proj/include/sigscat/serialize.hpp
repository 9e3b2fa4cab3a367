#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sigscat/errors.hpp"
#include "sigscat/model.hpp"
#include "sigscat/tensor.hpp"
#include "sigscat/text.hpp"

namespace sigscat {

// Tensor container ("SSNW"):
//   4 bytes  magic "SSNW"
//   u32 LE   format version
//   u64 LE   manifest length in bytes
//   manifest UTF-8 text: "[meta]" key = value lines, then "[tensors]" lines
//            "<name> <d0,d1,...> <byte offset> <byte length>"
//   payload  little-endian IEEE-754 float32, row-major, offsets relative to
//            the payload start

inline constexpr char kContainerMagic[4] = {'S', 'S', 'N', 'W'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

struct TensorContainer {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedTensor> tensors;

  const std::string* find_meta(std::string_view key) const {
    for (const auto& [k, v] : meta) {
      if (k == key) return &v;
    }
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline std::string encode_container(const TensorContainer& c) {
  std::ostringstream manifest;
  manifest << "[meta]\n";
  for (const auto& [k, v] : c.meta) manifest << k << " = " << v << "\n";
  manifest << "[tensors]\n";
  std::uint64_t offset = 0;
  for (const auto& t : c.tensors) {
    if (t.name.empty() || t.name.find_first_of(" \t\n") != std::string::npos) {
      throw FormatError("tensor name '" + t.name + "' is empty or contains whitespace");
    }
    const std::uint64_t bytes = 4ULL * t.tensor.size();
    manifest << t.name << ' '
             << text::join(t.tensor.shape(), ",", [](std::size_t d) { return std::to_string(d); })
             << ' ' << offset << ' ' << bytes << "\n";
    offset += bytes;
  }
  const std::string m = manifest.str();

  std::string out(kContainerMagic, 4);
  detail::put_u32(out, kContainerVersion);
  detail::put_u64(out, m.size());
  out += m;
  out.reserve(out.size() + offset);
  for (const auto& t : c.tensors) {
    for (float f : t.tensor.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline TensorContainer decode_container(const std::string& bytes) {
  if (bytes.size() < 16) throw FormatError("container truncated: header incomplete");
  if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
    throw FormatError("not a weights container: bad magic bytes");
  }
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 4, 4));
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const std::uint64_t mlen = detail::get_le(bytes, 8, 8);
  if (mlen > bytes.size() - 16) throw FormatError("container truncated: manifest incomplete");
  const std::string manifest = bytes.substr(16, mlen);
  const std::size_t payload_start = 16 + mlen;
  const std::size_t payload_size = bytes.size() - payload_start;

  TensorContainer c;
  std::istringstream in(manifest);
  std::string line;
  enum { none, meta, tensors } section = none;
  std::uint64_t expected_end = 0;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    if (t == "[meta]") { section = meta; continue; }
    if (t == "[tensors]") { section = tensors; continue; }
    if (section == meta) {
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) throw FormatError("malformed manifest line: " + line);
      c.meta.emplace_back(std::string(text::trim(t.substr(0, eq))),
                          std::string(text::trim(t.substr(eq + 1))));
    } else if (section == tensors) {
      std::istringstream ls{std::string(t)};
      std::string name, dims;
      std::uint64_t off = 0, len = 0;
      if (!(ls >> name >> dims >> off >> len)) throw FormatError("malformed tensor entry: " + line);
      Shape shape;
      try {
        for (const auto& d : text::split(dims, ',')) {
          shape.push_back(static_cast<std::size_t>(text::parse_int(d, "tensor extent")));
        }
      } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed tensor shape: ") + e.what());
      }
      if (len != 4ULL * element_count(shape)) {
        throw FormatError("tensor '" + name + "' byte length does not match its shape");
      }
      if (off + len > payload_size) throw FormatError("container truncated: tensor '" + name + "'");
      std::vector<float> data(element_count(shape));
      for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(
            detail::get_le(bytes, payload_start + off + 4 * i, 4)));
      }
      c.tensors.push_back({name, Tensor<float>(shape, std::move(data))});
      expected_end = std::max(expected_end, off + len);
    } else {
      throw FormatError("manifest content before any section: " + line);
    }
  }
  if (expected_end != payload_size) {
    throw FormatError("container payload has " + std::to_string(payload_size) +
                      " bytes, manifest describes " + std::to_string(expected_end));
  }
  return c;
}

/// Key/value view of a ModelConfig, shared by the weights manifest and the
/// run configuration.
inline std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& c) {
  auto ints = [](const std::vector<int>& v) {
    return text::join(v, ",", [](int x) { return std::to_string(x); });
  };
  return {
      {"scattering.J", std::to_string(c.scattering.J)},
      {"scattering.L", std::to_string(c.scattering.L)},
      {"scattering.input_height", std::to_string(c.scattering.input_height)},
      {"scattering.input_width", std::to_string(c.scattering.input_width)},
      {"model.conv_filters", ints(c.conv_filters)},
      {"model.kernel", std::to_string(c.kernel)},
      {"model.pool_after_block",
       text::join(c.pool_after_block, ",", [](bool b) { return std::string(b ? "true" : "false"); })},
      {"model.padding", text::join(c.padding, ",", [](Padding p) { return to_string(p); })},
      {"model.pool_window", std::to_string(c.pool_window)},
      {"model.pool_ceil", c.pool_ceil ? "true" : "false"},
      {"model.embedding_dim", std::to_string(c.embedding_dim)},
      {"model.normalize_embeddings", c.normalize_embeddings ? "true" : "false"},
  };
}

/// Applies one "section.key" entry to a ModelConfig. Returns false for keys
/// outside the scattering/model sections.
inline bool apply_model_entry(ModelConfig& c, std::string_view key, std::string_view value) {
  const std::string k(key);
  auto int_list = [&] {
    std::vector<int> v;
    for (const auto& s : text::split(value, ',')) v.push_back(static_cast<int>(text::parse_int(s, k)));
    return v;
  };
  if (k == "scattering.J") c.scattering.J = static_cast<int>(text::parse_int(value, k));
  else if (k == "scattering.L") c.scattering.L = static_cast<int>(text::parse_int(value, k));
  else if (k == "scattering.input_height") c.scattering.input_height = static_cast<int>(text::parse_int(value, k));
  else if (k == "scattering.input_width") c.scattering.input_width = static_cast<int>(text::parse_int(value, k));
  else if (k == "model.conv_filters") c.conv_filters = int_list();
  else if (k == "model.kernel") c.kernel = static_cast<int>(text::parse_int(value, k));
  else if (k == "model.pool_after_block") {
    c.pool_after_block.clear();
    for (const auto& s : text::split(value, ',')) c.pool_after_block.push_back(text::parse_bool(s, k));
  } else if (k == "model.padding") {
    c.padding.clear();
    for (const auto& s : text::split(value, ',')) c.padding.push_back(parse_padding(s));
  } else if (k == "model.pool_window") c.pool_window = static_cast<int>(text::parse_int(value, k));
  else if (k == "model.pool_ceil") c.pool_ceil = text::parse_bool(value, k);
  else if (k == "model.embedding_dim") c.embedding_dim = static_cast<int>(text::parse_int(value, k));
  else if (k == "model.normalize_embeddings") c.normalize_embeddings = text::parse_bool(value, k);
  else return false;
  return true;
}

inline std::string serialize(const ModelWeights<float>& weights) {
  TensorContainer c;
  c.meta.emplace_back("kind", "sigscat-weights");
  c.meta.emplace_back("model_version", std::to_string(weights.version()));
  for (auto& kv : model_config_entries(weights.config())) c.meta.push_back(std::move(kv));
  for (const auto& p : weights.parameters()) c.tensors.push_back({p.name, p.tensor});
  return encode_container(c);
}

/// Rebuilds weights from a container. Every check runs before the model is
/// constructed, so a failure never yields a partially loaded model.
inline ModelWeights<float> deserialize(const std::string& bytes) {
  TensorContainer c = decode_container(bytes);
  const std::string* kind = c.find_meta("kind");
  if (!kind || *kind != "sigscat-weights") throw FormatError("container does not hold model weights");
  const std::string* ver = c.find_meta("model_version");
  if (!ver || *ver != std::to_string(ModelWeights<float>::kFormatVersion)) {
    throw FormatError("unsupported model version " + (ver ? *ver : std::string("<missing>")));
  }
  ModelConfig config;
  try {
    for (const auto& [k, v] : c.meta) {
      if (k == "kind" || k == "model_version") continue;
      if (!apply_model_entry(config, k, v)) throw FormatError("unknown manifest key '" + k + "'");
    }
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid model config in weights file: ") + e.what());
  }
  std::vector<Parameter<float>> params;
  for (auto& t : c.tensors) params.push_back({std::move(t.name), std::move(t.tensor)});
  try {
    return ModelWeights<float>(config, std::move(params));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("weights do not match their config: ") + e.what());
  }
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void save_weights(const std::string& path, const ModelWeights<float>& weights) {
  write_file_bytes(path, serialize(weights));
}

inline ModelWeights<float> load_weights(const std::string& path) {
  try {
    return deserialize(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace sigscat
