#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mghft/tensor.hpp"

namespace mghft {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kLogClampEps = 1e-12;

// Elementwise arithmetic. `b` must either match `a` exactly or equal the
// trailing dimensions of `a`, in which case it is broadcast over the leading
// (batch) dimensions. No other broadcasting is supported.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

/// [m x k] * [k x n]. A batched [B x m x k] left operand is multiplied by a
/// shared [k x n] or per-batch [B x k x n] right operand.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes of a matrix.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last axis, then applies per-feature gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column means of a matrix, as a [1 x d] row.
Tensor mean_rows(const Tensor& x);
/// Divides every row by its L2 norm. Throws std::domain_error on a zero row.
Tensor normalize_rows(const Tensor& x);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// out.flat[j] = x.flat[source[j]]; gradients are scatter-added back.
Tensor gather(const Tensor& x, std::vector<std::size_t> source, Shape out_shape);

/// Mean over rows of -log softmax(logits)[target]. Throws std::out_of_range
/// for a target index >= number of classes.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
/// Mean over rows of sum_j p_ij (log p_ij - log q_ij), with q clamped at eps.
/// Terms with p_ij == 0 contribute zero.
Tensor kl_divergence_rows(const Tensor& p, const Tensor& q, double eps = kLogClampEps);

}  // namespace mghft
