#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "illama/attention.hpp"
#include "illama/layers.hpp"
#include "illama/tape.hpp"
#include "illama/tensor.hpp"

namespace illama {

enum class ClsPlacement { Front, PostSequence };

std::string to_string(ClsPlacement placement);
/// "front" or "post" / "post_sequence"; ConfigError otherwise.
ClsPlacement parse_cls_placement(std::string_view text);

struct ModelConfig {
  std::string name = "custom";
  std::size_t depth = 6;
  std::size_t embed_dim = 128;
  std::size_t num_heads = 4;
  std::size_t patch_size = 4;
  std::size_t image_size = 32;
  std::size_t in_channels = 3;
  std::size_t num_classes = 10;
  ClsPlacement cls_placement = ClsPlacement::PostSequence;
  MaskKind mask = MaskKind::causal();  // used at inference
  std::size_t ffn_multiple_of = 8;
  double rope_base = 10000.0;
  double norm_eps = 1e-6;
  double init_std = 0.2;

  std::size_t num_patches() const;
  /// Patches plus the class token.
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t ffn_hidden() const { return swiglu_hidden(embed_dim, ffn_multiple_of); }

  /// Human-readable list of violated constraints; empty when valid.
  std::vector<std::string> violations() const;
  /// Throws ConfigError naming every violation.
  void validate() const;

  /// micro, tiny, small, base, large. ConfigError for anything else.
  static ModelConfig preset(std::string_view name);
  static const std::vector<std::string>& preset_names();

  bool operator==(const ModelConfig&) const = default;
};

template <Real T>
struct Block {
  RMSNormParams<T> norm1;
  AttentionParams<T> attn;
  RMSNormParams<T> norm2;
  SwiGLUParams<T> ffn;
};

template <Real T>
struct Model {
  ModelConfig config;
  PatchEmbed<T> patch_embed;
  Tensor<T> cls_token;  // [d]
  LPETable<T> lpe;      // [num_tokens, d]
  std::vector<Block<T>> blocks;
  RMSNormParams<T> final_norm;
  Tensor<T> head_weight;  // [d, num_classes]
  Tensor<T> head_bias;    // [num_classes]
  RoPECache<T> rope;

  /// Same architecture with zero weights, unit gammas.
  static Model allocate(const ModelConfig& config);

  template <Real U>
  Model<U> cast() const;

  void zero_grad();
};

/// Visits (name, tensor) for every parameter in a fixed order.
template <typename M, typename F>
void for_each_parameter(M& m, F&& f) {
  f(std::string("patch_embed.proj"), m.patch_embed.projection);
  f(std::string("patch_embed.bias"), m.patch_embed.bias);
  f(std::string("cls_token"), m.cls_token);
  f(std::string("lpe"), m.lpe.table);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    auto& b = m.blocks[i];
    f(p + "norm1.gamma", b.norm1.gamma);
    f(p + "attn.w_q", b.attn.w_q);
    f(p + "attn.w_k", b.attn.w_k);
    f(p + "attn.w_v", b.attn.w_v);
    f(p + "attn.w_o", b.attn.w_o);
    f(p + "norm2.gamma", b.norm2.gamma);
    f(p + "ffn.w_gate", b.ffn.w_gate);
    f(p + "ffn.w_up", b.ffn.w_up);
    f(p + "ffn.w_down", b.ffn.w_down);
  }
  f(std::string("final_norm.gamma"), m.final_norm.gamma);
  f(std::string("head.weight"), m.head_weight);
  f(std::string("head.bias"), m.head_bias);
}

/// Truncated-normal (+-2 std) weights with std config.init_std; zero biases,
/// unit gammas. Deterministic in seed.
template <Real T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed);

/// Exact scalar count of all parameters, computed without allocating.
std::size_t param_count(const ModelConfig& config);

struct ForwardOptions {
  MaskKind mask = MaskKind::causal();
  /// Receives post-mask attention maps when set.
  std::vector<AttentionRecord>* capture = nullptr;
  /// 1-based layers to capture; empty captures every layer.
  std::vector<std::size_t> capture_layers;
  /// Stochastic depth: block i drops with rate * i / (depth - 1).
  double drop_path = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// images [B,C,H,W] -> logits [B,num_classes].
template <Real T>
Var<T> forward(Model<T>& model, const Var<T>& images, const ForwardOptions& options);

/// Value form of forward with no gradient bookkeeping.
template <Real T>
Tensor<T> predict(const Model<T>& model, const Tensor<T>& images, const MaskKind& mask);

/// tokens [N,d], cls [d] -> [N+1,d] with cls at row 0 (Front) or N (PostSequence).
template <Real T>
Tensor<T> insert_cls(const Tensor<T>& tokens, const Tensor<T>& cls, ClsPlacement placement);

/// Batched tape form: tokens [B*N,d] -> [B*(N+1),d].
template <Real T>
Var<T> insert_cls(const Var<T>& tokens, const Var<T>& cls, std::size_t batch,
                  ClsPlacement placement);

/// Row of the class token within one sequence of n_tokens rows.
inline std::size_t cls_row(ClsPlacement placement, std::size_t n_tokens) {
  return placement == ClsPlacement::Front ? 0 : n_tokens - 1;
}

template <Real T>
template <Real U>
Model<U> Model<T>::cast() const {
  Model<U> out = Model<U>::allocate(config);
  std::vector<const Tensor<T>*> src;
  for_each_parameter(*this, [&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  for_each_parameter(out, [&](const std::string&, Tensor<U>& t) { t = src[i++]->template cast<U>(); });
  return out;
}

}  // namespace illama
