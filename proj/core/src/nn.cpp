#include "mghft/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mghft {

double Rng::uniform() {
  // 53 random bits -> [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

double Rng::truncated_normal(double stddev) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * stddev;
  }
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

Tensor ParameterStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back({name, value});
  return value;
}

Tensor ParameterStore::add_truncated_normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.truncated_normal(stddev);
  return add(name, Tensor::from(std::move(shape), std::move(values), true));
}

Tensor ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value, true));
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second].tensor;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               double init_std)
    : weight(store.add_truncated_normal(name + ".weight", {in, out}, rng, init_std)),
      bias(store.add_constant(name + ".bias", {out}, 0.0)) {}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim)
    : gain(store.add_constant(name + ".gain", {dim}, 1.0)), bias(store.add_constant(name + ".bias", {dim}, 0.0)) {}

}  // namespace mghft
