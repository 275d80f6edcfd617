#include "illama/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"
#include "illama/errors.hpp"

namespace illama {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_to_string(s));
  }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a) + " and " +
                     shape_to_string(b) + " differ");
  }
}

template <Real T>
void softmax_kernel(const T* in, T* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T mx = kMasked<T>;
    bool visible = false;
    for (std::size_t c = 0; c < cols; ++c) {
      mx = std::max(mx, x[c]);
      visible = visible || x[c] != kMasked<T>;
    }
    if (!visible) throw DegenerateRowError(r);
    if (mx == kMasked<T>) {
      // Only NaN scores are visible: propagate them rather than report a collapse.
      std::fill_n(y, cols, std::numeric_limits<T>::quiet_NaN());
      continue;
    }
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const T e = x[c] == kMasked<T> ? T{0} : std::exp(x[c] - mx);
      y[c] = e;
      total += e;
    }
    const T inv = T{1} / total;
    for (std::size_t c = 0; c < cols; ++c) y[c] *= inv;
  }
}

}  // namespace

template <Real T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree: " +
                     shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  detail::gemm(a.ptr(), false, b.ptr(), false, out.ptr(), m, n, k, T{1}, T{0});
  return out;
}

template <Real T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  if (a.rank() == 0 || a.empty()) throw ShapeError("softmax_rows: empty input");
  const std::size_t cols = a.shape().back();
  Tensor<T> out(a.shape());
  softmax_kernel(a.ptr(), out.ptr(), a.numel() / cols, cols);
  return out;
}

template <Real T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = matmul(a.value(), b.value());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tape<T>& tape = a.tape();
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](std::span<const T> g) {
    Tape<T>& t = a.tape();
    if (a.needs_grad()) {
      // dA = dO * B^T
      detail::gemm(g.data(), false, b.value().ptr(), true, t.grad_of(a).data(), m,
                   k, n, T{1}, T{1});
    }
    if (b.needs_grad()) {
      // dB = A^T * dO
      detail::gemm(a.value().ptr(), true, g.data(), false, t.grad_of(b).data(), k,
                   n, m, T{1}, T{1});
    }
  });
}

template <Real T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b, T alpha) {
  require_rank(a.shape(), 3, "bmm");
  require_rank(b.shape(), 3, "bmm");
  const std::size_t groups = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
  const std::size_t n = transpose_b ? b.shape()[1] : b.shape()[2];
  const std::size_t bk = transpose_b ? b.shape()[2] : b.shape()[1];
  if (b.shape()[0] != groups || bk != k) {
    throw ShapeError("bmm: incompatible shapes " + shape_to_string(a.shape()) +
                     " and " + shape_to_string(b.shape()));
  }
  Tensor<T> out({groups, m, n});
  const T* ap = a.value().ptr();
  const T* bp = b.value().ptr();
  for (std::size_t g = 0; g < groups; ++g) {
    detail::gemm(ap + g * m * k, false, bp + g * k * n, transpose_b,
                 out.ptr() + g * m * n, m, n, k, alpha, T{0});
  }
  return a.tape().record(
      std::move(out), {a, b},
      [a, b, groups, m, n, k, transpose_b, alpha](std::span<const T> grad) {
        Tape<T>& t = a.tape();
        const T* ap = a.value().ptr();
        const T* bp = b.value().ptr();
        if (a.needs_grad()) {
          T* da = t.grad_of(a).data();
          for (std::size_t g = 0; g < groups; ++g) {
            // dA = alpha * dO * op(B)^T
            detail::gemm(grad.data() + g * m * n, false, bp + g * k * n, !transpose_b,
                         da + g * m * k, m, k, n, alpha, T{1});
          }
        }
        if (b.needs_grad()) {
          T* db = t.grad_of(b).data();
          for (std::size_t g = 0; g < groups; ++g) {
            if (transpose_b) {
              // B stored [n,k]: dB = alpha * dO^T * A
              detail::gemm(grad.data() + g * m * n, true, ap + g * m * k, false,
                           db + g * k * n, n, k, m, alpha, T{1});
            } else {
              // dB = alpha * A^T * dO
              detail::gemm(ap + g * m * k, true, grad.data() + g * m * n, false,
                           db + g * k * n, k, n, m, alpha, T{1});
            }
          }
        }
      });
}

template <Real T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  const T* ap = a.value().ptr();
  const T* bp = b.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ap[i] + bp[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](std::span<const T> g) {
    for (const Var<T>* v : {&a, &b}) {
      if (!v->needs_grad()) continue;
      auto dst = v->tape().grad_of(*v);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

template <Real T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  const T* ap = a.value().ptr();
  const T* bp = b.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ap[i] * bp[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](std::span<const T> g) {
    const T* ap = a.value().ptr();
    const T* bp = b.value().ptr();
    if (a.needs_grad()) {
      auto da = a.tape().grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bp[i];
    }
    if (b.needs_grad()) {
      auto db = b.tape().grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ap[i];
    }
  });
}

template <Real T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  const T* ap = a.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ap[i] * factor;
  return a.tape().record(std::move(out), {a}, [a, factor](std::span<const T> g) {
    auto da = a.tape().grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
  });
}

template <Real T>
Var<T> add_tiled(const Var<T>& a, const Var<T>& b) {
  const std::size_t n = a.numel(), period = b.numel();
  if (period == 0 || n % period != 0) {
    throw ShapeError("add_tiled: " + shape_to_string(b.shape()) + " does not tile " +
                     shape_to_string(a.shape()));
  }
  Tensor<T> out(a.shape());
  const T* ap = a.value().ptr();
  const T* bp = b.value().ptr();
  for (std::size_t base = 0; base < n; base += period) {
    for (std::size_t j = 0; j < period; ++j) out[base + j] = ap[base + j] + bp[j];
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, n, period](std::span<const T> g) {
    if (a.needs_grad()) {
      auto da = a.tape().grad_of(a);
      for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
    }
    if (b.needs_grad()) {
      auto db = b.tape().grad_of(b);
      for (std::size_t base = 0; base < n; base += period) {
        for (std::size_t j = 0; j < period; ++j) db[j] += g[base + j];
      }
    }
  });
}

template <Real T>
Var<T> mul_tiled(const Var<T>& a, const Var<T>& b) {
  const std::size_t n = a.numel(), period = b.numel();
  if (period == 0 || n % period != 0) {
    throw ShapeError("mul_tiled: " + shape_to_string(b.shape()) + " does not tile " +
                     shape_to_string(a.shape()));
  }
  Tensor<T> out(a.shape());
  const T* ap = a.value().ptr();
  const T* bp = b.value().ptr();
  for (std::size_t base = 0; base < n; base += period) {
    for (std::size_t j = 0; j < period; ++j) out[base + j] = ap[base + j] * bp[j];
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, n, period](std::span<const T> g) {
    const T* ap = a.value().ptr();
    const T* bp = b.value().ptr();
    if (a.needs_grad()) {
      auto da = a.tape().grad_of(a);
      for (std::size_t base = 0; base < n; base += period) {
        for (std::size_t j = 0; j < period; ++j) da[base + j] += g[base + j] * bp[j];
      }
    }
    if (b.needs_grad()) {
      auto db = b.tape().grad_of(b);
      for (std::size_t base = 0; base < n; base += period) {
        for (std::size_t j = 0; j < period; ++j) db[j] += g[base + j] * ap[base + j];
      }
    }
  });
}

template <Real T>
Var<T> softmax_rows(const Var<T>& a) {
  Tensor<T> out = softmax_rows(a.value());
  const std::size_t cols = a.shape().back();
  const std::size_t id = a.tape().size();  // id the output is about to receive
  return a.tape().record(std::move(out), {a}, [a, cols, id](std::span<const T> g) {
    Tape<T>& t = a.tape();
    const T* p = t.value(id).ptr();
    auto da = t.grad_of(a);
    const std::size_t rows = g.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * cols;
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[o + c] * p[o + c];
      for (std::size_t c = 0; c < cols; ++c) da[o + c] += p[o + c] * (g[o + c] - dot);
    }
  });
}

template <Real T>
Var<T> silu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  const T* ap = a.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = ap[i] / (T{1} + std::exp(-ap[i]));
  }
  return a.tape().record(std::move(out), {a}, [a](std::span<const T> g) {
    const T* ap = a.value().ptr();
    auto da = a.tape().grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = T{1} / (T{1} + std::exp(-ap[i]));
      da[i] += g[i] * s * (T{1} + ap[i] * (T{1} - s));
    }
  });
}

template <Real T>
Var<T> sum(const Var<T>& a) {
  double total = 0;
  for (T v : a.value().data()) total += v;
  return a.tape().record(Tensor<T>::scalar(static_cast<T>(total)), {a},
                         [a](std::span<const T> g) {
                           auto da = a.tape().grad_of(a);
                           for (auto& d : da) d += g[0];
                         });
}

template <Real T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

template <Real T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  out.set_requires_grad(false);
  return a.tape().record(std::move(out), {a}, [a](std::span<const T> g) {
    auto da = a.tape().grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
  });
}

template <Real T>
Var<T> gather_rows(const Var<T>& a, std::vector<std::size_t> rows) {
  require_rank(a.shape(), 2, "gather_rows");
  const std::size_t r = a.shape()[0], d = a.shape()[1];
  if (rows.empty()) throw ShapeError("gather_rows: no rows selected");
  Tensor<T> out({rows.size(), d});
  const T* ap = a.value().ptr();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= r) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(ap + rows[i] * d, d, out.ptr() + i * d);
  }
  return a.tape().record(std::move(out), {a}, [a, rows = std::move(rows), d](std::span<const T> g) {
    auto da = a.tape().grad_of(a);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) da[rows[i] * d + j] += g[i * d + j];
    }
  });
}

template <Real T>
Var<T> scale_row_blocks(const Var<T>& a, std::vector<T> factors) {
  if (factors.empty() || a.numel() % factors.size() != 0) {
    throw ShapeError("scale_row_blocks: factor count does not divide the value");
  }
  const std::size_t block = a.numel() / factors.size();
  Tensor<T> out(a.shape());
  const T* ap = a.value().ptr();
  for (std::size_t b = 0; b < factors.size(); ++b) {
    for (std::size_t j = 0; j < block; ++j) out[b * block + j] = ap[b * block + j] * factors[b];
  }
  return a.tape().record(std::move(out), {a},
                         [a, factors = std::move(factors), block](std::span<const T> g) {
                           auto da = a.tape().grad_of(a);
                           for (std::size_t b = 0; b < factors.size(); ++b) {
                             for (std::size_t j = 0; j < block; ++j) {
                               da[b * block + j] += g[b * block + j] * factors[b];
                             }
                           }
                         });
}

#define ILLAMA_INSTANTIATE_OPS(T)                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> softmax_rows(const Tensor<T>&);                            \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                         \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool, T);                   \
  template Var<T> add(const Var<T>&, const Var<T>&);                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                            \
  template Var<T> scale(const Var<T>&, T);                                      \
  template Var<T> add_tiled(const Var<T>&, const Var<T>&);                      \
  template Var<T> mul_tiled(const Var<T>&, const Var<T>&);                      \
  template Var<T> softmax_rows(const Var<T>&);                                  \
  template Var<T> silu(const Var<T>&);                                          \
  template Var<T> sum(const Var<T>&);                                           \
  template Var<T> mean(const Var<T>&);                                          \
  template Var<T> reshape(const Var<T>&, Shape);                                \
  template Var<T> gather_rows(const Var<T>&, std::vector<std::size_t>);         \
  template Var<T> scale_row_blocks(const Var<T>&, std::vector<T>);

ILLAMA_INSTANTIATE_OPS(float)
ILLAMA_INSTANTIATE_OPS(double)

}  // namespace illama
