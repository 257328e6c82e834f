#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mghft/model.hpp"

namespace mghft {

struct AttentionRecord {
  std::string sticker_id;
  std::string image;
  std::size_t stage = 0;  // 1-based
  std::size_t grid = 0;
  std::vector<std::vector<double>> values;  // grid x grid CLS attention

  std::string to_json() const;
  static AttentionRecord from_json(std::string_view text);
};

/// Final-stage CLS attention of every example, reshaped to its token grid.
std::vector<AttentionRecord> compute_attention(const MghftModel& model, std::span<const Example> examples);

/// Writes one "<sticker_id>.attn.json" per example into `out_dir` and returns
/// the written paths in example order.
std::vector<std::filesystem::path> export_attention(const MghftModel& model, std::span<const Example> examples,
                                                    const std::filesystem::path& out_dir);

}  // namespace mghft
