#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mghft/model.hpp"
#include "mghft/text_context.hpp"

namespace mghft {

inline const std::vector<std::string> kSer30kClasses{"Anger",   "Disgust", "Fear",    "Happiness",
                                                     "Neutral", "Sadness", "Surprise"};

struct LabeledExample {
  std::string sticker_id;
  std::string image;  // path relative to the manifest, or "<archive>#<entry>"
  std::size_t label = 0;
};

// Manifest: JSON Lines of {"sticker_id", "image", "label"}; class names come
// from a sidecar JSON array (classes.json next to the manifest by default).
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<LabeledExample> items;
  std::vector<std::string> class_names;
};

DatasetManifest read_manifest(const std::filesystem::path& manifest,
                              const std::filesystem::path& class_names = {});
void write_manifest(const std::filesystem::path& manifest, const std::vector<LabeledExample>& items,
                    const std::vector<std::string>& class_names);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  void validate() const;
};

enum class Split { kTrain, kVal, kTest };

/// Items are ranked by a seeded hash of their sticker id; the first
/// round(train * n) go to train, the next round(val * n) to validation and
/// the rest to test. Independent of manifest order.
std::vector<Split> assign_splits(std::span<const std::string> sticker_ids, std::uint64_t seed,
                                 const SplitRatios& ratios);

/// Resolves image references into [C x S x S] tensors in [0, 1]. PNG/JPEG
/// files are decoded as RGB and resized; archive references read a stored
/// pixel tensor.
class ImageLoader {
 public:
  ImageLoader(std::size_t image_size, std::size_t channels = 3) : size_(image_size), channels_(channels) {}
  Tensor load(const std::filesystem::path& root, const std::string& ref) const;

 private:
  std::size_t size_;
  std::size_t channels_;
  mutable std::map<std::string, std::map<std::string, Tensor>> archives_;
};

struct DatasetSplits {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
  std::vector<std::string> class_names;
  std::size_t excluded_missing_views = 0;
};

DatasetSplits load_dataset(const DatasetManifest& manifest, const SplitRatios& ratios, std::uint64_t seed,
                           const std::map<std::string, ViewEmbeddings>& embeddings, const ImageLoader& images);

}  // namespace mghft
