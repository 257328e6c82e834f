#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mghft/nn.hpp"
#include "mghft/tensor.hpp"

namespace mghft {

// On-disk layout (all integers little-endian):
//   8 bytes   magic "MGHFTARC"
//   u32       format version
//   u64       manifest length in bytes
//   manifest  UTF-8 JSON: {"format_version", "kind", "metadata": {...},
//             "entries": [{"name", "shape", "offset", "count"}]}
//   payload   float32 little-endian buffers; entry offsets are in bytes
//             relative to the start of the payload
inline constexpr std::uint32_t kArchiveFormatVersion = 1;

struct ArchiveEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Archive {
  std::string kind;
  std::map<std::string, std::string> metadata;
  std::vector<ArchiveEntry> entries;

  const ArchiveEntry* find(std::string_view name) const;
};

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_archive(const Archive& archive);
Archive decode_archive(std::string_view bytes);

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     std::map<std::string, std::string> metadata = {});
/// Loads values into `params`. Every parameter must be present with the same
/// shape, and the archive must not contain unknown names.
std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& path, ParameterStore& params);

}  // namespace mghft
