#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdmt/nn.hpp"

namespace mdmt {

// Binary layout (all integers and payloads little-endian):
//   "MDMT" | version u32 | count u32
//   per parameter: name_len u16 | name | rank u8 | extents u32[rank] | f64[numel]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params);
ParamSet decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file and renames into place.
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

/// Writes `contents` to `path` atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace mdmt
