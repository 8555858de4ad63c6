#include "lclab/checkpoint_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <string>

#include "lclab/errors.hpp"
#include "lclab/json_io.hpp"

namespace lclab {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

namespace {

template <typename T>
void put(std::vector<std::byte>& out, T value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::byte> bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

}  // namespace

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.validate();
  json dir = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const std::size_t len = t.numel() * sizeof(float);
    dir.push_back({{"name", name}, {"dtype", "f32"}, {"shape", t.shape()}, {"byte_offset", offset},
                   {"byte_length", len}});
    offset += len;
  }
  const json header = {{"config", ckpt.config}, {"tensors", dir}};
  const std::string text = header.dump();

  std::vector<std::byte> out;
  out.reserve(16 + text.size() + offset);
  for (char c : kCheckpointMagic) out.push_back(static_cast<std::byte>(c));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  for (char c : text) out.push_back(static_cast<std::byte>(c));
  for (const auto& [name, t] : ckpt.tensors) {
    const auto* p = reinterpret_cast<const std::byte*>(t.data().data());
    out.insert(out.end(), p, p + t.numel() * sizeof(float));
  }
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::byte> bytes) {
  using K = ParseErrorKind;
  if (bytes.size() < 4) throw ParseError(K::kTruncated, "file shorter than the magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw ParseError(K::kBadMagic, "expected \"LCMP\"");
  if (bytes.size() < 16) throw ParseError(K::kTruncated, "file shorter than the fixed preamble");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw ParseError(K::kVersionMismatch, "file version " + std::to_string(version) + ", reader supports " +
                                              std::to_string(kCheckpointVersion));
  }
  const auto header_len = get<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - 16) throw ParseError(K::kTruncated, "header extends past end of file");
  const auto data = bytes.subspan(16 + header_len);

  json header;
  try {
    header = json::parse(reinterpret_cast<const char*>(bytes.data() + 16),
                         reinterpret_cast<const char*>(bytes.data() + 16 + header_len));
  } catch (const json::exception& e) {
    throw ParseError(K::kHeader, e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = header.at("config").get<ModelConfig>();
    ckpt.config.validate();
  } catch (const json::exception& e) {
    throw ParseError(K::kHeader, std::string("config: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(K::kHeader, std::string("config: ") + e.what());
  }

  std::map<std::string, Shape> expected;
  for (auto& spec : expected_tensors(ckpt.config)) expected.emplace(spec.name, spec.shape);

  try {
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto dtype = entry.at("dtype").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto off = entry.at("byte_offset").get<std::uint64_t>();
      const auto len = entry.at("byte_length").get<std::uint64_t>();
      if (dtype != "f32") throw ParseError(K::kHeader, "tensor '" + name + "' has unsupported dtype " + dtype);
      auto it = expected.find(name);
      if (it == expected.end()) throw ParseError(K::kShape, "unexpected tensor '" + name + "'");
      if (shape != it->second) throw ParseError(K::kShape, "tensor '" + name + "' shape disagrees with config");
      if (len != shape_numel(shape) * sizeof(float)) {
        throw ParseError(K::kShape, "tensor '" + name + "' byte_length disagrees with shape");
      }
      if (off > data.size() || len > data.size() - off) {
        throw ParseError(K::kBounds, "tensor '" + name + "' extends past end of file");
      }
      std::vector<float> values(len / sizeof(float));
      std::memcpy(values.data(), data.data() + off, len);
      Tensor t(shape, std::move(values));
      if (!t.all_finite()) throw ParseError(K::kNonFinite, "tensor '" + name + "'");
      if (!ckpt.tensors.emplace(name, std::move(t)).second) {
        throw ParseError(K::kHeader, "duplicate tensor '" + name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(K::kHeader, std::string("tensor directory: ") + e.what());
  }
  if (ckpt.tensors.size() != expected.size()) throw ParseError(K::kShape, "checkpoint is missing tensors");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return parse_checkpoint(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace lclab
