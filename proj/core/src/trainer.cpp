#include "mghft/trainer.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "mghft/archive.hpp"
#include "mghft/optim.hpp"

namespace mghft {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 for the contrastive loss");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

std::string EpochMetrics::to_json_line() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["train_loss"] = train_loss;
  j["val_acc"] = val_acc;
  j["val_macro_f1"] = val_macro_f1;
  return j.dump();
}

std::string metrics_log(const std::vector<EpochMetrics>& history) {
  std::string out;
  for (const auto& m : history) {
    out += m.to_json_line();
    out += '\n';
  }
  return out;
}

TrainResult train(MghftModel& model, std::span<const Example> train_split, std::span<const Example> val_split,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (train_split.size() < 2) throw std::invalid_argument("training needs at least two examples");
  if (val_split.empty()) throw std::invalid_argument("training needs a validation split");

  AdamW optimizer(model.params(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng shuffle_rng(config.seed);
  const std::size_t batches_per_epoch = train_split.size() / config.batch_size +
                                        (train_split.size() % config.batch_size >= 2 ? 1 : 0);
  std::size_t total_steps = batches_per_epoch * config.epochs;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  TrainResult result;
  std::string last_checkpoint;
  std::vector<std::size_t> order(train_split.size());
  bool stop = false;
  for (std::size_t epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      std::vector<const Example*> batch;
      std::vector<std::size_t> labels;
      for (std::size_t i = 0; i < n; ++i) {
        batch.push_back(&train_split[order[start + i]]);
        labels.push_back(batch.back()->label);
      }

      if (config.cosine_schedule) {
        const double progress = static_cast<double>(result.steps) / static_cast<double>(total_steps);
        optimizer.set_learning_rate(config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      }
      model.params().zero_grad();
      LossBreakdown loss = model.loss(model.forward(batch), labels);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at step " + std::to_string(result.steps + 1) +
                            "; last good checkpoint: " + (last_checkpoint.empty() ? "none" : last_checkpoint));
      }
      loss.total.backward();
      optimizer.step();
      ++result.steps;
      loss_sum += value;
      ++loss_count;

      if (options.on_step && !options.on_step(result.steps, value)) stop = true;
      if (stop || (config.max_steps > 0 && result.steps >= config.max_steps)) {
        stop = true;
        break;
      }
    }

    const EvalReport report = evaluate(model, val_split);
    EpochMetrics m;
    m.epoch = epoch;
    m.step = result.steps;
    m.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    m.val_acc = report.accuracy;
    m.val_macro_f1 = report.macro_f1;
    result.history.push_back(m);

    if (report.accuracy > result.best_val_acc) {
      result.best_val_acc = report.accuracy;
      result.best_epoch = epoch;
      if (!options.checkpoint_path.empty()) {
        save_checkpoint(options.checkpoint_path, model.params(),
                        {{"epoch", std::to_string(epoch)},
                         {"step", std::to_string(result.steps)},
                         {"val_acc", std::to_string(report.accuracy)}});
        last_checkpoint = options.checkpoint_path.string();
      }
    }
    if (!options.metrics_path.empty()) write_file_atomic(options.metrics_path, metrics_log(result.history));
    if (options.on_epoch) options.on_epoch(m);
  }
  return result;
}

}  // namespace mghft
