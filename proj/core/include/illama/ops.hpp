#pragma once

#include <cstddef>
#include <vector>

#include "illama/tape.hpp"
#include "illama/tensor.hpp"

namespace illama {

// Plain-value kernels. These never touch a tape.

/// [m,k] x [k,n] -> [m,n].
template <Real T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Row-wise softmax over the last axis, stabilised by the row max.
/// kMasked entries map to exactly 0; a row with no finite entry throws
/// DegenerateRowError naming the flattened row index.
template <Real T>
Tensor<T> softmax_rows(const Tensor<T>& a);

// Tape ops. Each records its backward rule on the operands' tape.

template <Real T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// Batched product over a leading group axis: [g,m,k] x [g,k,n] -> [g,m,n],
/// or [g,m,k] x [g,n,k]^T when transpose_b. The result is scaled by alpha.
template <Real T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false,
           T alpha = T{1});

template <Real T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <Real T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <Real T>
Var<T> scale(const Var<T>& a, T factor);

/// a + b where b repeats to cover a (b.numel() must divide a.numel()).
/// Covers bias rows, positional tables, and per-group additive masks.
template <Real T>
Var<T> add_tiled(const Var<T>& a, const Var<T>& b);

/// a * b with the same tiling rule as add_tiled.
template <Real T>
Var<T> mul_tiled(const Var<T>& a, const Var<T>& b);

template <Real T>
Var<T> softmax_rows(const Var<T>& a);

/// z * sigmoid(z), elementwise.
template <Real T>
Var<T> silu(const Var<T>& a);

template <Real T>
Var<T> sum(const Var<T>& a);

template <Real T>
Var<T> mean(const Var<T>& a);

template <Real T>
Var<T> reshape(const Var<T>& a, Shape shape);

/// Selects rows of a 2-D value: [r,d] -> [rows.size(),d].
template <Real T>
Var<T> gather_rows(const Var<T>& a, std::vector<std::size_t> rows);

/// Multiplies each contiguous block of a's rows by one factor:
/// a is [blocks*rows_per_block, d], factors has one entry per block.
template <Real T>
Var<T> scale_row_blocks(const Var<T>& a, std::vector<T> factors);

}  // namespace illama
