#include "mghft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mghft {

namespace {

using detail::Node;

bool wants_grad(const Node& n) { return n.requires_grad && !n.grad.empty(); }

[[noreturn]] void dim_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_matrix(const char* op, const Tensor& x) {
  if (x.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
}

// Returns how many times `b` repeats inside `a` under leading-dim broadcasting.
std::size_t broadcast_repeats(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return 1;
  if (b.size() < a.size() && std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
    return shape_numel(a) / shape_numel(b);
  }
  dim_error(op, a, b);
}

template <typename Fwd, typename GradA, typename GradB>
Tensor elementwise(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, GradA grad_a, GradB grad_b) {
  const std::size_t reps = broadcast_repeats(op, a.shape(), b.shape());
  const std::size_t inner = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < inner; ++j) out[r * inner + j] = fwd(ad[r * inner + j], bd[j]);
  }
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [reps, inner, grad_a, grad_b](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t i = r * inner + j;
        const double g = self.grad[i];
        if (wants_grad(pa)) pa.grad[i] += grad_a(g, pa.data[i], pb.data[j]);
        if (wants_grad(pb)) pb.grad[j] += grad_b(g, pa.data[i], pb.data[j]);
      }
    }
  });
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

// Raw matrix product helpers over contiguous buffers (row-major).
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt_acc(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      const double* grow = g + i * n;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      c[i * k + p] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn_acc(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* grow = g + i * n;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(
      "add", a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += factor * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  std::size_t batch = 1;
  bool shared_b = true;
  if (as.size() == 2 && bs.size() == 2) {
  } else if (as.size() == 3 && bs.size() == 2) {
    batch = as[0];
  } else if (as.size() == 3 && bs.size() == 3 && as[0] == bs[0]) {
    batch = as[0];
    shared_b = false;
  } else {
    dim_error("matmul", as, bs);
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as[as.size() - 1];
  const std::size_t n = bs[bs.size() - 1];
  if (bs[bs.size() - 2] != k) dim_error("matmul", as, bs);

  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t t = 0; t < batch; ++t) {
    gemm_acc(ad + t * m * k, bd + (shared_b ? 0 : t * k * n), out.data() + t * m * n, m, k, n);
  }
  Shape out_shape = as.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
  return Tensor::make_result(std::move(out_shape), std::move(out), {a, b},
                             [batch, shared_b, m, k, n](Node& self) {
                               Node& pa = *self.parents[0];
                               Node& pb = *self.parents[1];
                               for (std::size_t t = 0; t < batch; ++t) {
                                 const double* g = self.grad.data() + t * m * n;
                                 const std::size_t b_off = shared_b ? 0 : t * k * n;
                                 if (wants_grad(pa)) {
                                   gemm_nt_acc(g, pb.data.data() + b_off, pa.grad.data() + t * m * k, m, k, n);
                                 }
                                 if (wants_grad(pb)) {
                                   gemm_tn_acc(pa.data.data() + t * m * k, g, pb.grad.data() + b_off, m, k, n);
                                 }
                               }
                             });
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  std::vector<std::size_t> source(rows * cols);
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = 0; j < rows; ++j) source[i * rows + j] = j * cols + i;
  }
  return gather(a, std::move(source), {cols, rows});
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) dim_error("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis);
  auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      double mx = -INFINITY;
      for (std::size_t e = 0; e < v.extent; ++e) mx = std::max(mx, xd[base + e * v.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) {
        const double ex = std::exp(xd[base + e * v.inner] - mx);
        out[base + e * v.inner] = ex;
        total += ex;
      }
      for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] /= total;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [v](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.extent * v.inner + in;
        double dot = 0.0;
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          dot += self.grad[i] * self.data[i];
        }
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          p.grad[i] += self.data[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis);
  auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      double mx = -INFINITY;
      for (std::size_t e = 0; e < v.extent; ++e) mx = std::max(mx, xd[base + e * v.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) total += std::exp(xd[base + e * v.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] = xd[base + e * v.inner] - lse;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [v](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.extent * v.inner + in;
        double gsum = 0.0;
        for (std::size_t e = 0; e < v.extent; ++e) gsum += self.grad[base + e * v.inner];
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          p.grad[i] += self.grad[i] - std::exp(self.data[i]) * gsum;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) dim_error("layer_norm", x.shape(), gain.shape());
  const std::size_t rows = x.numel() / d;
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gd[j] + bd[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        std::vector<double> gx(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          if (wants_grad(pg) || wants_grad(pb)) {
            for (std::size_t j = 0; j < d; ++j) {
              if (wants_grad(pg)) pg.grad[j] += g[j] * xh[j];
              if (wants_grad(pb)) pb.grad[j] += g[j];
            }
          }
          if (!wants_grad(px)) continue;
          double mean_gx = 0.0;
          double mean_gx_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            gx[j] = g[j] * pg.data[j];
            mean_gx += gx[j];
            mean_gx_xh += gx[j] * xh[j];
          }
          mean_gx /= static_cast<double>(d);
          mean_gx_xh /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            px.grad[r * d + j] += inv_std[r] * (gx[j] - mean_gx - xh[j] * mean_gx_xh);
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] / std::numbers::sqrt2));
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = p.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      p.grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_result({1}, {total}, {x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  require_matrix("mean_rows", x);
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  auto xd = x.data();
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c] += xd[r * cols + c];
  }
  for (auto& v : out) v /= static_cast<double>(rows);
  return Tensor::make_result({1, cols}, std::move(out), {x}, [rows, cols](Node& self) {
    Node& p = *self.parents[0];
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) p.grad[r * cols + c] += self.grad[c] * inv;
    }
  });
}

Tensor normalize_rows(const Tensor& x) {
  require_matrix("normalize_rows", x);
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  auto xd = x.data();
  std::vector<double> norms(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += xd[r * cols + c] * xd[r * cols + c];
    if (sq == 0.0) throw std::domain_error("normalize_rows: row " + std::to_string(r) + " has zero norm");
    norms[r] = std::sqrt(sq);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xd[r * cols + c] / norms[r];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, cols, norms = std::move(norms)](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) p.grad[r * cols + c] += (g[c] - y[c] * dot) / norms[r];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].shape().back();
  std::size_t rows = 0;
  for (const auto& t : parts) {
    require_matrix("concat_rows", t);
    if (t.dim(1) != cols) dim_error("concat_rows", parts[0].shape(), t.shape());
    rows += t.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
  return Tensor::make_result({rows, cols}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                             [](Node& self) {
                               std::size_t offset = 0;
                               for (auto& parent : self.parents) {
                                 const std::size_t n = parent->data.size();
                                 if (wants_grad(*parent)) {
                                   for (std::size_t i = 0; i < n; ++i) parent->grad[i] += self.grad[offset + i];
                                 }
                                 offset += n;
                               }
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& t : parts) {
    require_matrix("concat_cols", t);
    if (t.dim(0) != rows) dim_error("concat_cols", parts[0].shape(), t.shape());
    widths.push_back(t.dim(1));
    cols += t.dim(1);
  }
  std::vector<double> out(rows * cols);
  std::size_t c0 = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto d = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(d.data() + r * widths[k], widths[k], out.data() + r * cols + c0);
    }
    c0 += widths[k];
  }
  return Tensor::make_result({rows, cols}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                             [rows, cols, widths = std::move(widths)](Node& self) {
                               std::size_t c = 0;
                               for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                 Node& p = *self.parents[k];
                                 if (wants_grad(p)) {
                                   for (std::size_t r = 0; r < rows; ++r) {
                                     for (std::size_t j = 0; j < widths[k]; ++j) {
                                       p.grad[r * widths[k] + j] += self.grad[r * cols + c + j];
                                     }
                                   }
                                 }
                                 c += widths[k];
                               }
                             });
}

Tensor gather(const Tensor& x, std::vector<std::size_t> source, Shape out_shape) {
  if (shape_numel(out_shape) != source.size()) {
    throw DimensionError("gather: " + std::to_string(source.size()) + " indices for output shape " +
                         shape_str(out_shape));
  }
  auto xd = x.data();
  std::vector<double> out(source.size());
  for (std::size_t j = 0; j < source.size(); ++j) {
    if (source[j] >= xd.size()) {
      throw std::out_of_range("gather: index " + std::to_string(source[j]) + " out of range for " +
                              shape_str(x.shape()));
    }
    out[j] = xd[source[j]];
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, [source = std::move(source)](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t j = 0; j < source.size(); ++j) p.grad[source[j]] += self.grad[j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_matrix("slice_rows", x);
  if (count == 0 || start + count > x.dim(0)) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(1);
  std::vector<std::size_t> source(count * cols);
  for (std::size_t i = 0; i < source.size(); ++i) source[i] = start * cols + i;
  return gather(x, std::move(source), {count, cols});
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_matrix("slice_cols", x);
  if (count == 0 || start + count > x.dim(1)) {
    throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<std::size_t> source(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) source[r * count + c] = r * cols + start + c;
  }
  return gather(x, std::move(source), {rows, count});
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix("gather_rows", x);
  const std::size_t cols = x.dim(1);
  std::vector<std::size_t> source(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) throw std::out_of_range("gather_rows: row index out of range");
    for (std::size_t c = 0; c < cols; ++c) source[i * cols + c] = rows[i] * cols + c;
  }
  return gather(x, std::move(source), {rows.size(), cols});
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_matrix("cross_entropy", logits);
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  std::vector<std::size_t> picks(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= c) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[i]) + " >= class count " +
                              std::to_string(c));
    }
    picks[i] = i * c + targets[i];
  }
  Tensor logp = log_softmax(logits, 1);
  Tensor picked = gather(logp, std::move(picks), {n});
  return scale(sum(picked), -1.0 / static_cast<double>(n));
}

Tensor kl_divergence_rows(const Tensor& p, const Tensor& q, double eps) {
  require_matrix("kl_divergence_rows", p);
  if (p.shape() != q.shape()) dim_error("kl_divergence_rows", p.shape(), q.shape());
  const std::size_t rows = p.dim(0);
  auto pd = p.data();
  auto qd = q.data();
  double total = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    if (pd[i] > 0.0) total += pd[i] * (std::log(pd[i]) - std::log(std::max(qd[i], eps)));
  }
  total /= static_cast<double>(rows);
  return Tensor::make_result({1}, {total}, {p, q}, [rows, eps](Node& self) {
    Node& pp = *self.parents[0];
    Node& pq = *self.parents[1];
    const double g = self.grad[0] / static_cast<double>(rows);
    for (std::size_t i = 0; i < pp.data.size(); ++i) {
      const double pv = pp.data[i];
      const double qv = pq.data[i];
      if (wants_grad(pp)) {
        pp.grad[i] += g * (std::log(std::max(pv, eps)) - std::log(std::max(qv, eps)) + 1.0);
      }
      if (wants_grad(pq) && qv > eps) pq.grad[i] += -g * pv / qv;
    }
  });
}

}  // namespace mghft
