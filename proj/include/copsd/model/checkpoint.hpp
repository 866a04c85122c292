// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "copsd/model/transformer.hpp"

namespace copsd {

// File layout: "COPSDCK1" | u32 LE header length N | N bytes of JSON
// {config, manifest: [{name, shape, offset}], step_tag} | f32 LE data in
// manifest order. Offsets are byte offsets into the data section.
inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'P', 'S', 'D', 'C', 'K', '1'};

struct ModelCheckpoint {
  Model model;
  std::int64_t step_tag = 0;
};

std::vector<std::uint8_t> encode_checkpoint(const Model& model, std::int64_t step_tag);
ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, std::int64_t step_tag, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// Rounds every parameter to the nearest float, i.e. the value a save/load
// round trip produces.
void quantize_to_disk_precision(Model& model);

// FNV-1a 64 of a byte range / a file, as 16 hex digits.
std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace copsd
