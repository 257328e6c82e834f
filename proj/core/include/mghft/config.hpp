#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "mghft/dataset.hpp"
#include "mghft/mllm.hpp"
#include "mghft/model.hpp"
#include "mghft/text_context.hpp"
#include "mghft/trainer.hpp"

namespace mghft {

struct DataConfig {
  std::filesystem::path manifest;
  std::filesystem::path class_names;  // empty: classes.json next to the manifest
  SplitRatios split;
  std::uint64_t split_seed = 0;
};

struct TextConfig {
  std::string provider = "hash";  // hash | precomputed | remote
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::size_t max_len = kMaxTextLength;
  std::filesystem::path embeddings;    // encoded views; used directly when present
  std::filesystem::path descriptions;  // view texts to encode otherwise
  std::filesystem::path prompts;       // prompt templates for describe
  std::string endpoint;                // remote embedding URL
  std::string model;                   // remote embedding model
};

/// Everything one experiment needs. Unspecified fields keep their defaults;
/// relative paths resolve against the config file's directory.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  TextConfig text;
  MllmEndpointConfig mllm;
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;  // model initialization

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(std::string_view text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Desk-scale model for quick experiments: 32x32 images at stride 2, so the
/// stage grids are 16, 8, 4 and 2 as with the defaults, with narrow stages.
ModelConfig toy_model_config();

std::unique_ptr<EncoderProvider> make_encoder(const TextConfig& config);

/// Reads view embeddings from the configured embedding file, or encodes the
/// configured description file with the configured provider.
std::map<std::string, ViewEmbeddings> load_view_embeddings(const TextConfig& config);

/// Manifest, split assignment, images and view embeddings in one step.
DatasetSplits load_experiment_data(const ExperimentConfig& config);

}  // namespace mghft
