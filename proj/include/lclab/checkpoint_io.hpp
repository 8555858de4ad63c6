#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "lclab/model.hpp"

namespace lclab {

// On-disk layout, all integers little-endian:
//
//   offset 0   "LCMP"                 magic
//   offset 4   u32 version            currently 1
//   offset 8   u64 header_length      bytes of JSON that follow
//   offset 16  header JSON (UTF-8)    {"config": {...}, "tensors": [...]}
//   then       data section           tensor payloads, f32 little-endian
//
// Each "tensors" entry is {name, dtype: "f32", shape, byte_offset, byte_length}
// with byte_offset relative to the first byte of the data section. The writer
// emits tensors in name order, contiguous and unpadded. docs/checkpoint_format.md
// has the full description.
inline constexpr char kCheckpointMagic[4] = {'L', 'C', 'M', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt);
// Throws ParseError with a kind identifying the first defect found. Never
// returns a partially populated checkpoint.
Checkpoint parse_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lclab
