#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "illama/tape.hpp"
#include "illama/tensor.hpp"

namespace illama {

/// Non-overlapping patch projection. Patch vectors are flattened in
/// (channel, row, column) order.
template <Real T>
struct PatchEmbed {
  std::size_t patch_size = 0;
  std::size_t in_channels = 0;
  std::size_t embed_dim = 0;
  Tensor<T> projection;  // [patch_size^2 * in_channels, embed_dim]
  Tensor<T> bias;        // [embed_dim]
};

/// Scale-only normalisation: there is no shift parameter.
template <Real T>
struct RMSNormParams {
  Tensor<T> gamma;  // [d]
  T eps = T(1e-6);
};

/// Gated feed-forward without biases.
template <Real T>
struct SwiGLUParams {
  Tensor<T> w_gate;  // [d, h]
  Tensor<T> w_up;    // [d, h]
  Tensor<T> w_down;  // [h, d]
  std::size_t hidden() const { return w_gate.dim(1); }
};

/// Learnable positional table, one row per token including the class token.
template <Real T>
struct LPETable {
  Tensor<T> table;  // [n_tokens, d]
};

/// cos/sin tables for rotating consecutive (2i, 2i+1) pairs of a head vector
/// by position * base^(-2i / head_dim).
template <Real T>
class RoPECache {
 public:
  RoPECache() = default;
  RoPECache(std::size_t max_positions, std::size_t head_dim, double base = 10000.0);

  std::size_t max_positions() const noexcept { return max_positions_; }
  std::size_t head_dim() const noexcept { return head_dim_; }
  double base() const noexcept { return base_; }
  const Tensor<T>& cos() const noexcept { return cos_; }
  const Tensor<T>& sin() const noexcept { return sin_; }

 private:
  std::size_t max_positions_ = 0;
  std::size_t head_dim_ = 0;
  double base_ = 10000.0;
  Tensor<T> cos_;  // [max_positions, head_dim/2]
  Tensor<T> sin_;
};

/// SwiGLU hidden width: floor(8d/3) rounded up to a multiple of `multiple_of`.
std::size_t swiglu_hidden(std::size_t embed_dim, std::size_t multiple_of);

// Single-sequence value forms.

/// image [C,H,W] -> tokens [(H/p)*(W/p), d] in row-major patch order.
template <Real T>
Tensor<T> patchify(const Tensor<T>& image, const PatchEmbed<T>& pe);

template <Real T>
Tensor<T> rmsnorm(const Tensor<T>& x, const RMSNormParams<T>& p);

template <Real T>
Tensor<T> swiglu(const Tensor<T>& x, const SwiGLUParams<T>& p);

template <Real T>
Tensor<T> apply_rope(const Tensor<T>& qk, std::span<const std::size_t> positions,
                     const RoPECache<T>& cache);

template <Real T>
Tensor<T> add_lpe(const Tensor<T>& tokens, const LPETable<T>& lpe);

// Tape forms. Batched tensors stack sequences along the row axis.

/// images [B,C,H,W] -> patch vectors [B*N_img, C*p*p].
template <Real T>
Var<T> extract_patches(const Var<T>& images, std::size_t patch_size);

/// images [B,C,H,W] -> tokens [B*N_img, d].
template <Real T>
Var<T> patchify(const Var<T>& images, PatchEmbed<T>& pe);

template <Real T>
Var<T> rmsnorm(const Var<T>& x, const Var<T>& gamma, T eps);

template <Real T>
Var<T> rmsnorm(const Var<T>& x, RMSNormParams<T>& p);

template <Real T>
Var<T> swiglu(const Var<T>& x, SwiGLUParams<T>& p);

/// qk is [..., N, head_dim]; positions has N entries and applies to every
/// leading group.
template <Real T>
Var<T> apply_rope(const Var<T>& qk, std::span<const std::size_t> positions,
                  const RoPECache<T>& cache);

/// tokens [B*(N_img+1), d] + table [N_img+1, d] for every sequence.
template <Real T>
Var<T> add_lpe(const Var<T>& tokens, LPETable<T>& lpe);

}  // namespace illama
