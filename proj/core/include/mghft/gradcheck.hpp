#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mghft/tensor.hpp"

namespace mghft {

using ScalarFn = std::function<Tensor()>;

/// Central-difference estimate (f(x+h) - f(x-h)) / 2h for every element of
/// `x`. `f` re-evaluates the scalar objective from the current contents of
/// `x`; the buffer is restored after each probe.
Tensor finite_difference_grad(const ScalarFn& f, Tensor& x, double h = 1e-6);

/// Tensor-wise relative error ||a - b||_inf / max(||a||_inf, ||b||_inf, floor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-10);

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked_values = 0;
};

/// Runs backward() on f() once and compares the gradients of all `inputs`
/// with finite differences as one infinity-norm relative error. Existing
/// gradients are cleared first.
GradCheckResult check_gradients(const std::string& name, const ScalarFn& f, std::vector<Tensor> inputs,
                                double h = 1e-6);

}  // namespace mghft
