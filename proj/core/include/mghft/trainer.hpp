#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mghft/metrics.hpp"
#include "mghft/model.hpp"

namespace mghft {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  bool cosine_schedule = false;
  std::size_t max_steps = 0;  // 0 means no limit beyond the epoch count

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_macro_f1 = 0.0;

  std::string to_json_line() const;
};

/// Raised when the loss stops being finite; names the last good checkpoint.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  std::filesystem::path checkpoint_path;  // best-validation checkpoint, skipped when empty
  std::filesystem::path metrics_path;     // JSON Lines log, skipped when empty
  /// Called after every optimizer step; returning false stops training.
  std::function<bool(std::size_t step, double loss)> on_step;
  /// Called after every epoch's validation.
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::size_t steps = 0;
  double best_val_acc = -1.0;
  std::size_t best_epoch = 0;
};

/// AdamW on cross-entropy plus the alignment loss. Batches are reshuffled
/// every epoch from a generator seeded with `config.seed`; a trailing batch
/// with fewer than two examples is dropped because the alignment losses need
/// pairs.
TrainResult train(MghftModel& model, std::span<const Example> train_split, std::span<const Example> val_split,
                  const TrainConfig& config, const TrainOptions& options = {});

std::string metrics_log(const std::vector<EpochMetrics>& history);

}  // namespace mghft
