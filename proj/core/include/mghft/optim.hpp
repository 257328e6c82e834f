#pragma once

#include <cstddef>
#include <vector>

#include "mghft/nn.hpp"

namespace mghft {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Parameters without a gradient in a given
/// step are left untouched (their moments are not advanced either).
class AdamW {
 public:
  AdamW(ParameterStore& params, AdamWConfig config);

  void step();
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamWConfig& config() const { return config_; }
  std::size_t steps() const { return step_; }

 private:
  ParameterStore& params_;
  AdamWConfig config_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace mghft
