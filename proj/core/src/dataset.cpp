#include "mghft/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hash_util.hpp"
#include "mghft/archive.hpp"

namespace mghft {

using nlohmann::json;

DatasetManifest read_manifest(const std::filesystem::path& manifest, const std::filesystem::path& class_names) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open dataset manifest " + manifest.string());
  DatasetManifest out;
  out.root = manifest.parent_path();

  const std::filesystem::path classes_path = class_names.empty() ? out.root / "classes.json" : class_names;
  if (std::filesystem::exists(classes_path)) {
    try {
      out.class_names = json::parse(read_file(classes_path)).get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw DataError("malformed class-name file " + classes_path.string() + ": " + e.what());
    }
  } else if (!class_names.empty()) {
    throw DataError("class-name file not found: " + class_names.string());
  } else {
    out.class_names = kSer30kClasses;
  }
  if (out.class_names.size() < 2) throw DataError("a dataset needs at least two classes");

  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    LabeledExample item;
    try {
      const json j = json::parse(line);
      item.sticker_id = j.at("sticker_id").get<std::string>();
      item.image = j.at("image").get<std::string>();
      item.label = j.at("label").get<std::size_t>();
    } catch (const json::exception& e) {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (item.label >= out.class_names.size()) {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) + ": label " + std::to_string(item.label) +
                      " outside " + std::to_string(out.class_names.size()) + " classes");
    }
    if (!ids.insert(item.sticker_id).second) {
      throw DataError(manifest.string() + ": duplicate sticker_id " + item.sticker_id);
    }
    out.items.push_back(std::move(item));
  }
  if (out.items.empty()) throw DataError("dataset manifest " + manifest.string() + " is empty");
  return out;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<LabeledExample>& items,
                    const std::vector<std::string>& class_names) {
  std::string text;
  for (const auto& item : items) {
    text += json{{"sticker_id", item.sticker_id}, {"image", item.image}, {"label", item.label}}.dump();
    text += '\n';
  }
  write_file_atomic(manifest, text);
  write_file_atomic(manifest.parent_path() / "classes.json", json(class_names).dump());
}

void SplitRatios::validate() const {
  if (train < 0.0 || val < 0.0 || test < 0.0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(train + val + test - 1.0) > 1e-6) throw ConfigError("split ratios must sum to 1");
}

std::vector<Split> assign_splits(std::span<const std::string> sticker_ids, std::uint64_t seed,
                                 const SplitRatios& ratios) {
  ratios.validate();
  const std::size_t n = sticker_ids.size();
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t state = detail::fnv1a64(sticker_ids[i]) ^ seed;
    keys[i] = detail::splitmix64(state);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : sticker_ids[a] < sticker_ids[b];
  });
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_val =
      std::min(n - std::min(n, n_train), static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n))));
  std::vector<Split> out(n, Split::kTest);
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (rank < n_train) {
      out[order[rank]] = Split::kTrain;
    } else if (rank < n_train + n_val) {
      out[order[rank]] = Split::kVal;
    }
  }
  return out;
}

Tensor ImageLoader::load(const std::filesystem::path& root, const std::string& ref) const {
  const auto hash = ref.find('#');
  if (hash != std::string::npos) {
    const std::filesystem::path file = root / ref.substr(0, hash);
    const std::string entry = ref.substr(hash + 1);
    auto& table = archives_[file.string()];
    if (table.empty()) {
      Archive archive = read_archive(file);
      for (auto& e : archive.entries) {
        std::vector<double> values(e.values.begin(), e.values.end());
        table.emplace(e.name, Tensor::from(e.shape, std::move(values)));
      }
    }
    auto it = table.find(entry);
    if (it == table.end()) throw DataError("image entry " + entry + " not found in " + file.string());
    const Shape expected{channels_, size_, size_};
    if (it->second.shape() != expected) {
      throw DataError("image entry " + entry + " has shape " + shape_str(it->second.shape()) + ", expected " +
                      shape_str(expected));
    }
    return it->second;
  }

  const std::filesystem::path file = root / ref;
  cv::Mat img = cv::imread(file.string(), channels_ == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (img.empty()) throw DataError("cannot decode image " + file.string());
  if (channels_ == 3) cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  if (img.rows != static_cast<int>(size_) || img.cols != static_cast<int>(size_)) {
    cv::resize(img, img, cv::Size(static_cast<int>(size_), static_cast<int>(size_)), 0, 0, cv::INTER_AREA);
  }
  std::vector<double> values(channels_ * size_ * size_);
  for (std::size_t y = 0; y < size_; ++y) {
    const auto* row = img.ptr<unsigned char>(static_cast<int>(y));
    for (std::size_t x = 0; x < size_; ++x) {
      for (std::size_t c = 0; c < channels_; ++c) {
        values[c * size_ * size_ + y * size_ + x] = row[x * channels_ + c] / 255.0;
      }
    }
  }
  return Tensor::from({channels_, size_, size_}, std::move(values));
}

DatasetSplits load_dataset(const DatasetManifest& manifest, const SplitRatios& ratios, std::uint64_t seed,
                           const std::map<std::string, ViewEmbeddings>& embeddings, const ImageLoader& images) {
  if (manifest.items.empty()) throw DataError("dataset is empty");
  std::vector<std::string> ids;
  ids.reserve(manifest.items.size());
  for (const auto& item : manifest.items) ids.push_back(item.sticker_id);
  const std::vector<Split> splits = assign_splits(ids, seed, ratios);

  DatasetSplits out;
  out.class_names = manifest.class_names;
  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    const LabeledExample& item = manifest.items[i];
    auto emb = embeddings.find(item.sticker_id);
    if (emb == embeddings.end()) {
      ++out.excluded_missing_views;
      continue;
    }
    Example ex;
    ex.sticker_id = item.sticker_id;
    ex.image_ref = item.image;
    ex.image = images.load(manifest.root, item.image);
    ex.views = emb->second;
    ex.label = item.label;
    switch (splits[i]) {
      case Split::kTrain: out.train.push_back(std::move(ex)); break;
      case Split::kVal: out.val.push_back(std::move(ex)); break;
      case Split::kTest: out.test.push_back(std::move(ex)); break;
    }
  }
  return out;
}

}  // namespace mghft
