#include "mghft/attention_export.hpp"

#include <json.hpp>

#include "mghft/archive.hpp"

namespace mghft {

std::string AttentionRecord::to_json() const {
  nlohmann::ordered_json j;
  j["sticker_id"] = sticker_id;
  j["image"] = image;
  j["stage"] = stage;
  j["grid"] = {grid, grid};
  j["values"] = values;
  return j.dump();
}

AttentionRecord AttentionRecord::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  AttentionRecord r;
  r.sticker_id = j.at("sticker_id").get<std::string>();
  r.image = j.at("image").get<std::string>();
  r.stage = j.at("stage").get<std::size_t>();
  r.grid = j.at("grid").at(0).get<std::size_t>();
  r.values = j.at("values").get<std::vector<std::vector<double>>>();
  return r;
}

std::vector<AttentionRecord> compute_attention(const MghftModel& model, std::span<const Example> examples) {
  NoGradGuard no_grad;
  std::vector<AttentionRecord> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const ForwardResult result = model.forward(examples.subspan(i, 1));
    const AttentionMap& map = result.attention.front()[kNumStages - 1];
    AttentionRecord r;
    r.sticker_id = examples[i].sticker_id;
    r.image = examples[i].image_ref;
    r.stage = kNumStages;
    r.grid = map.grid;
    for (std::size_t y = 0; y < map.grid; ++y) {
      r.values.emplace_back(map.values.begin() + static_cast<std::ptrdiff_t>(y * map.grid),
                            map.values.begin() + static_cast<std::ptrdiff_t>((y + 1) * map.grid));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::filesystem::path> export_attention(const MghftModel& model, std::span<const Example> examples,
                                                    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;
  for (const AttentionRecord& r : compute_attention(model, examples)) {
    paths.push_back(out_dir / (r.sticker_id + ".attn.json"));
    write_file_atomic(paths.back(), r.to_json());
  }
  return paths;
}

}  // namespace mghft
