#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "drive/types.hpp"

namespace drive {

inline constexpr int kDemoLogVersion = 1;

/// Floats per .drvlog record for an h*w image: two images, two speeds, the
/// action triple, reward and done flag.
constexpr std::size_t demo_record_floats(int height, int width) {
  return 2 * static_cast<std::size_t>(height) * static_cast<std::size_t>(width) + 7;
}

/// Writes a .drvlog: one JSON header line, then little-endian float32 records.
std::size_t write_demo_log(std::span<const Transition> transitions,
                           const std::filesystem::path& path);
std::vector<Transition> read_demo_log(const std::filesystem::path& path);

/// Writes a .ckpt: one JSON manifest line, then the concatenated float32 blob.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Shortest round-trip decimal form ("nan" for NaN).
std::string csv_number(double value);

/// Writes a comma-separated table with a header row. Throws IoError.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace drive
