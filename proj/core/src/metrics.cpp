#include "mghft/metrics.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mghft {

EvalReport make_report(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                       std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("predictions and labels differ in length");
  if (labels.empty()) throw std::invalid_argument("cannot evaluate an empty split");
  EvalReport r;
  r.num_classes = num_classes;
  r.total = labels.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw std::out_of_range("class index out of range at example " + std::to_string(i));
    }
    ++r.confusion[labels[i]][predictions[i]];
  }

  std::size_t correct = 0;
  r.support.assign(num_classes, 0);
  std::vector<std::size_t> predicted(num_classes, 0);
  for (std::size_t a = 0; a < num_classes; ++a) {
    correct += r.confusion[a][a];
    for (std::size_t p = 0; p < num_classes; ++p) {
      r.support[a] += r.confusion[a][p];
      predicted[p] += r.confusion[a][p];
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);

  r.per_class_precision.assign(num_classes, 0.0);
  r.per_class_recall.assign(num_classes, 0.0);
  r.per_class_f1.assign(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double tp = static_cast<double>(r.confusion[c][c]);
    if (predicted[c]) r.per_class_precision[c] = tp / static_cast<double>(predicted[c]);
    if (r.support[c]) r.per_class_recall[c] = tp / static_cast<double>(r.support[c]);
    const double pr = r.per_class_precision[c] + r.per_class_recall[c];
    if (pr > 0.0) r.per_class_f1[c] = 2.0 * r.per_class_precision[c] * r.per_class_recall[c] / pr;
    r.macro_f1 += r.per_class_f1[c];
    r.weighted_f1 += r.per_class_f1[c] * static_cast<double>(r.support[c]);
  }
  r.macro_f1 /= static_cast<double>(num_classes);
  r.weighted_f1 /= static_cast<double>(r.total);
  return r;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows expects a matrix, got " + shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  auto d = logits.data();
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto begin = d.begin() + static_cast<std::ptrdiff_t>(r * cols);
    out[r] = static_cast<std::size_t>(std::max_element(begin, begin + static_cast<std::ptrdiff_t>(cols)) - begin);
  }
  return out;
}

EvalReport evaluate(const MghftModel& model, std::span<const Example> split, std::size_t batch_size) {
  if (split.empty()) throw std::invalid_argument("cannot evaluate an empty split");
  if (batch_size == 0) batch_size = 1;
  NoGradGuard no_grad;
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> labels;
  predictions.reserve(split.size());
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    auto batch = split.subspan(start, std::min(batch_size, split.size() - start));
    for (std::size_t p : argmax_rows(model.forward(batch).logits)) predictions.push_back(p);
    for (const auto& ex : batch) {
      if (ex.label >= model.config().num_classes) {
        throw std::out_of_range("example " + ex.sticker_id + " has label outside the model's class count");
      }
      labels.push_back(ex.label);
    }
  }
  return make_report(predictions, labels, model.config().num_classes);
}

}  // namespace mghft
