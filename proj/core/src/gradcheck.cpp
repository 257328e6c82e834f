#include "mghft/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mghft {

Tensor finite_difference_grad(const ScalarFn& f, Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_difference_grad: step must be positive");
  NoGradGuard no_grad;
  auto buf = x.mutable_data();
  std::vector<double> out(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double saved = buf[i];
    buf[i] = saved + h;
    const double plus = f().item();
    buf[i] = saved - h;
    const double minus = f().item();
    buf[i] = saved;
    out[i] = (plus - minus) / (2.0 * h);
  }
  return Tensor::from(x.shape(), std::move(out));
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  double diff = 0.0;
  double scale = floor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

GradCheckResult check_gradients(const std::string& name, const ScalarFn& f, std::vector<Tensor> inputs,
                                double h) {
  for (auto& t : inputs) t.zero_grad();
  f().backward();
  // One infinity-norm ratio over every checked value: inputs whose exact
  // gradient is zero (e.g. key biases under softmax) are measured against the
  // operator's gradient scale instead of against their own rounding noise.
  GradCheckResult result{name, 0.0, 0};
  double diff = 0.0;
  double scale = 1e-10;
  for (auto& t : inputs) {
    std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
    Tensor numeric = finite_difference_grad(f, t, h);
    auto n = numeric.data();
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff = std::max(diff, std::abs(analytic[i] - n[i]));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(n[i])});
    }
    result.checked_values += t.numel();
  }
  result.max_rel_error = diff / scale;
  return result;
}

}  // namespace mghft
