// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include "copsd/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "copsd/errors.hpp"

namespace copsd {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model, std::int64_t step_tag) {
  const auto layout = parameter_layout(model.config);
  if (layout.size() != model.params.size()) throw CheckpointError(CheckpointError::Kind::kManifestMismatch,
                                                                  "parameter set does not match config layout");
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& p = model.params[i];
    if (p.name != layout[i].first || p.value.shape() != layout[i].second) {
      throw CheckpointError(CheckpointError::Kind::kManifestMismatch,
                            "parameter '" + p.name + "' does not match config layout");
    }
    manifest.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.size() * sizeof(float);
  }
  nlohmann::json header{{"config", model.config}, {"manifest", manifest}, {"step_tag", step_tag}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& p : model.params) {
    for (double v : p.value.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      put_u32(out, bits);
    }
  }
  return out;
}

ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < 12) {
    throw CheckpointError(Kind::kTruncated, "checkpoint truncated: expected at least 12 bytes, got " +
                                                std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError(Kind::kMagicMismatch, "checkpoint magic mismatch: expected COPSDCK1");
  }
  const std::size_t header_len = get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + header_len) {
    throw CheckpointError(Kind::kTruncated, "checkpoint truncated: expected " + std::to_string(12 + header_len) +
                                                " header bytes, got " + std::to_string(bytes.size()));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::kHeader, std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  ModelCheckpoint ck;
  try {
    ck.model.config = header.at("config").get<ModelConfig>();
    ck.step_tag = header.at("step_tag").get<std::int64_t>();
    ck.model.config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::kHeader, std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::kHeader, std::string("checkpoint config is invalid: ") + e.what());
  }

  const auto layout = parameter_layout(ck.model.config);
  const auto& manifest = header.at("manifest");
  if (!manifest.is_array() || manifest.size() != layout.size()) {
    throw CheckpointError(Kind::kManifestMismatch, "manifest lists " + std::to_string(manifest.size()) +
                                                       " arrays, config implies " + std::to_string(layout.size()));
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& e = manifest[i];
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    if (name != layout[i].first || shape != layout[i].second) {
      throw CheckpointError(Kind::kManifestMismatch, "manifest entry '" + name + "' " + shape_string(shape) +
                                                         " disagrees with config layout '" + layout[i].first +
                                                         "' " + shape_string(layout[i].second));
    }
    if (offset != expected_offset) {
      throw CheckpointError(Kind::kManifestMismatch, "manifest offsets are not contiguous at '" + name + "'");
    }
    expected_offset += shape_size(shape) * sizeof(float);
  }

  const std::size_t data_start = 12 + header_len;
  const std::size_t expected_total = data_start + expected_offset;
  if (bytes.size() < expected_total) {
    throw CheckpointError(Kind::kTruncated, "checkpoint truncated: expected " + std::to_string(expected_total) +
                                                " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected_total) {
    throw CheckpointError(Kind::kManifestMismatch, "checkpoint has " + std::to_string(bytes.size() - expected_total) +
                                                       " trailing bytes beyond the manifest");
  }
  const std::uint8_t* p = bytes.data() + data_start;
  for (const auto& [name, shape] : layout) {
    Array a(shape);
    for (auto& v : a.values()) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(p)));
      p += 4;
    }
    ck.model.params.push_back({name, std::move(a)});
  }
  return ck;
}

void save_checkpoint(const Model& model, std::int64_t step_tag, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model, step_tag);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_bytes(path)); }

void quantize_to_disk_precision(Model& model) {
  for (auto& p : model.params) {
    for (auto& v : p.value.values()) v = static_cast<double>(static_cast<float>(v));
  }
}

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) { return fnv1a_hex(read_bytes(path)); }

}  // namespace copsd
