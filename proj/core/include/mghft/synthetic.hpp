#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mghft/model.hpp"

namespace mghft {

/// Class-separable toy data: every class owns a pixel template and one
/// direction per view, and each example mixes its class signal with noise in
/// both modalities.
struct SyntheticSpec {
  std::size_t count = 64;
  std::size_t num_classes = 7;
  std::size_t image_size = 64;
  std::size_t channels = 3;
  std::size_t text_dim = 64;
  std::size_t text_len = 8;
  double image_signal = 0.5;
  double image_noise = 0.1;
  double text_signal = 1.0;
  double text_noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Labels cycle through the classes, so classes are balanced up to one item.
std::vector<Example> make_synthetic_examples(const SyntheticSpec& spec);

/// Writes manifest.jsonl, classes.json, pixels.marc and embeddings.marc into
/// `dir`; image references point into the pixel archive.
void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec);

}  // namespace mghft
