#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mghft/model.hpp"
#include "mghft/tensor.hpp"

namespace mghft {

enum class F1Average { kMacro, kWeighted };

struct EvalReport {
  std::size_t num_classes = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_f1;
  std::vector<std::size_t> support;               // actual count per class
  std::vector<std::vector<std::size_t>> confusion;  // [actual][predicted]

  double f1(F1Average average) const { return average == F1Average::kMacro ? macro_f1 : weighted_f1; }
};

/// Builds every metric from one confusion matrix. Classes with no actual and
/// no predicted examples get precision = recall = F1 = 0 and still count in
/// the macro average.
EvalReport make_report(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                       std::size_t num_classes);

/// Row-wise argmax, lower index on ties.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

/// Runs the model without recording a tape and scores it on `split`.
EvalReport evaluate(const MghftModel& model, std::span<const Example> split, std::size_t batch_size = 16);

}  // namespace mghft
