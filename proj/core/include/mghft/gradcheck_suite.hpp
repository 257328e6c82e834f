#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mghft/gradcheck.hpp"
#include "mghft/model.hpp"

namespace mghft {

/// Tiny model used for whole-network gradient checks: 16x16 images, small
/// stage widths and a larger initialization so gradients are well above
/// finite-difference noise.
ModelConfig gradcheck_model_config();

/// Two examples with random images and view sequences for `config`.
std::vector<Example> gradcheck_batch(const ModelConfig& config, std::uint64_t seed);

/// Checks every differentiable operator and the full model against central
/// finite differences at float64. `progress` is called after each operator.
std::vector<GradCheckResult> run_gradcheck_suite(
    std::uint64_t seed = 0, const std::function<void(const GradCheckResult&)>& progress = {});

}  // namespace mghft
