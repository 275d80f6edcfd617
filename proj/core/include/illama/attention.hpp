#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "illama/layers.hpp"
#include "illama/tape.hpp"
#include "illama/tensor.hpp"

namespace illama {

/// Which tokens each query may read.
///
/// Bidirectional, Causal and ModifiedCausal are additive masks applied before
/// the softmax (0 = visible, kMasked = hidden). Soft(alpha) multiplies the
/// softmax output by alpha*ones + (1-alpha)*lower_triangular_ones and does not
/// renormalise.
class MaskKind {
 public:
  enum class Type { Bidirectional, Causal, ModifiedCausal, Soft };

  static MaskKind bidirectional() { return MaskKind(Type::Bidirectional, 0.0); }
  static MaskKind causal() { return MaskKind(Type::Causal, 0.0); }
  static MaskKind modified_causal() { return MaskKind(Type::ModifiedCausal, 0.0); }
  /// Throws RangeError unless alpha is in [0,1].
  static MaskKind soft(double alpha);

  /// Accepts "bidirectional", "causal", "modified", "modified_causal" and
  /// "soft:<alpha>".
  static MaskKind parse(const std::string& text);

  Type type() const noexcept { return type_; }
  double alpha() const noexcept { return alpha_; }
  bool is_soft() const noexcept { return type_ == Type::Soft; }
  std::string to_string() const;

  friend bool operator==(const MaskKind&, const MaskKind&) = default;

 private:
  MaskKind(Type type, double alpha) : type_(type), alpha_(alpha) {}
  Type type_ = Type::Causal;
  double alpha_ = 0.0;
};

template <Real T>
struct AttentionParams {
  Tensor<T> w_q;  // [d,d]
  Tensor<T> w_k;
  Tensor<T> w_v;
  Tensor<T> w_o;
  std::size_t num_heads = 1;

  std::size_t embed_dim() const { return w_q.dim(0); }
  std::size_t head_dim() const { return embed_dim() / num_heads; }
};

/// One captured post-softmax (post-soft-mask) attention map.
struct AttentionRecord {
  std::size_t layer = 0;   // 1-based
  std::size_t head = 0;    // 1-based
  std::size_t sample = 0;  // index within the forwarded batch
  Tensor<float> matrix;    // [N,N]
};

/// Additive [n,n] mask; throws ContractError for Soft (a multiplicative mask).
template <Real T>
Tensor<T> build_additive_mask(const MaskKind& kind, std::size_t n);

/// alpha * ones + (1 - alpha) * lower-triangular ones; RangeError outside [0,1].
template <Real T>
Tensor<T> build_soft_mask(double alpha, std::size_t n);

/// Optional sink for attention maps during a forward pass.
struct AttentionCapture {
  std::vector<AttentionRecord>* sink = nullptr;
  std::size_t layer = 1;
};

/// Multi-head self-attention over `batch` stacked sequences.
///
/// x is [batch*N, d]. Per head, scores are RoPE(q).RoPE(k)^T / sqrt(head_dim)
/// with RoPE positions equal to the row index within the sequence (rope may be
/// null to disable it). Heads are concatenated and projected by w_o; residual
/// connections are the caller's. A query row that can see no key raises
/// AttentionCollapseError.
template <Real T>
Var<T> mhsa_forward(const Var<T>& x, std::size_t batch, AttentionParams<T>& params,
                    const MaskKind& kind, const RoPECache<T>* rope,
                    const AttentionCapture& capture = {});

/// Single-sequence value form: x is [N,d]. Records are returned when capture
/// is set (layer index 1).
template <Real T>
std::pair<Tensor<T>, std::vector<AttentionRecord>> mhsa_forward(
    const Tensor<T>& x, const AttentionParams<T>& params, const MaskKind& kind,
    const RoPECache<T>* rope, bool capture);

// Attention dump files: "ATNR", u32 version, u32 layer, u32 head, u32 n, then
// n*n little-endian f32 in row-major order.

inline constexpr std::uint32_t kAttentionDumpVersion = 1;

void write_attention_dump(const std::filesystem::path& path, const AttentionRecord& record);

/// Throws FormatError on bad magic, version or size. `sample` is left 0.
AttentionRecord read_attention_dump(const std::filesystem::path& path);

}  // namespace illama
