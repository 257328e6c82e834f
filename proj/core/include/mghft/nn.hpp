#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mghft/ops.hpp"
#include "mghft/tensor.hpp"

namespace mghft {

/// Seeded generator with platform-independent sampling. The std::
/// distributions are implementation-defined, so they are not used for
/// anything that has to reproduce bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Normal with standard deviation `stddev`, resampled outside +-2 stddev.
  double truncated_normal(double stddev);
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Named, insertion-ordered collection of trainable tensors.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Tensor value);
  Tensor add_truncated_normal(const std::string& name, Shape shape, Rng& rng, double stddev);
  Tensor add_constant(const std::string& name, Shape shape, double value);

  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor get(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

inline constexpr double kInitStd = 0.02;

/// y = x W + b with W stored as [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         double init_std = kInitStd);
  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

}  // namespace mghft
