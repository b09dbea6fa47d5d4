#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlpo/denoiser.hpp"

namespace dlpo {

// Binary layout, little-endian:
//   "DLPO" | u32 version | u64 count | count x f64
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  DenoiserDims dims;
  std::string config_hash;  // hex FNV-1a of the canonical config text
};

// Writes `path` and `path`.meta through a temporary file and rename.
// Throws IoError.
void save_checkpoint(const std::filesystem::path& path,
                     std::span<const double> params, const CheckpointMeta& meta);

// Throws IoError when the file cannot be read and FormatError on a bad magic,
// version, truncated payload, trailing bytes, or a count different from
// `expected_count` (skipped when zero).
std::vector<double> load_checkpoint(const std::filesystem::path& path,
                                    std::size_t expected_count = 0);

std::filesystem::path meta_path(const std::filesystem::path& checkpoint);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Replaces `path` with `contents` atomically. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace dlpo
