#include "illama/attention.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "illama/errors.hpp"
#include "illama/ops.hpp"

namespace illama {

MaskKind MaskKind::soft(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw RangeError("soft mask alpha must lie in [0,1], got " + std::to_string(alpha));
  }
  return MaskKind(Type::Soft, alpha);
}

MaskKind MaskKind::parse(const std::string& text) {
  if (text == "bidirectional") return bidirectional();
  if (text == "causal") return causal();
  if (text == "modified" || text == "modified_causal") return modified_causal();
  if (text.rfind("soft:", 0) == 0) {
    std::istringstream is(text.substr(5));
    double a = 0;
    if (!(is >> a) || !is.eof()) throw ConfigError("bad soft mask alpha in '" + text + "'");
    return soft(a);
  }
  throw ConfigError("unknown mask kind '" + text + "'");
}

std::string MaskKind::to_string() const {
  switch (type_) {
    case Type::Bidirectional:
      return "bidirectional";
    case Type::Causal:
      return "causal";
    case Type::ModifiedCausal:
      return "modified_causal";
    case Type::Soft: {
      std::ostringstream os;
      os << "soft:" << alpha_;
      return os.str();
    }
  }
  return "?";
}

template <Real T>
Tensor<T> build_additive_mask(const MaskKind& kind, std::size_t n) {
  if (n == 0) throw ShapeError("build_additive_mask: n must be at least 1");
  if (kind.is_soft()) {
    throw ContractError("soft masks are multiplicative; use build_soft_mask");
  }
  Tensor<T> m({n, n}, T{0});
  if (kind.type() == MaskKind::Type::Bidirectional) return m;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) m.at(i, j) = kMasked<T>;
  }
  if (kind.type() == MaskKind::Type::ModifiedCausal) {
    for (std::size_t j = 0; j < n; ++j) m.at(0, j) = T{0};
  }
  return m;
}

template <Real T>
Tensor<T> build_soft_mask(double alpha, std::size_t n) {
  if (n == 0) throw ShapeError("build_soft_mask: n must be at least 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw RangeError("soft mask alpha must lie in [0,1], got " + std::to_string(alpha));
  }
  Tensor<T> s({n, n}, T{1});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s.at(i, j) = static_cast<T>(alpha);
  }
  return s;
}

namespace {

// [B*N, H*hd] <-> [B*H, N, hd]
template <Real T>
Var<T> regroup_heads(const Var<T>& x, std::size_t batch, std::size_t n, std::size_t heads,
                     std::size_t hd, bool split) {
  Tensor<T> out = split ? Tensor<T>({batch * heads, n, hd}) : Tensor<T>({batch * n, heads * hd});
  const T* src = x.value().ptr();
  auto tok_off = [=](std::size_t b, std::size_t r, std::size_t h) {
    return (b * n + r) * heads * hd + h * hd;
  };
  auto head_off = [=](std::size_t b, std::size_t r, std::size_t h) {
    return ((b * heads + h) * n + r) * hd;
  };
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t from = split ? tok_off(b, r, h) : head_off(b, r, h);
        const std::size_t to = split ? head_off(b, r, h) : tok_off(b, r, h);
        std::copy_n(src + from, hd, out.ptr() + to);
      }
    }
  }
  return x.tape().record(std::move(out), {x},
                         [=](std::span<const T> g) {
                           auto dx = x.tape().grad_of(x);
                           for (std::size_t b = 0; b < batch; ++b) {
                             for (std::size_t r = 0; r < n; ++r) {
                               for (std::size_t h = 0; h < heads; ++h) {
                                 const std::size_t from = split ? tok_off(b, r, h) : head_off(b, r, h);
                                 const std::size_t to = split ? head_off(b, r, h) : tok_off(b, r, h);
                                 for (std::size_t j = 0; j < hd; ++j) dx[from + j] += g[to + j];
                               }
                             }
                           }
                         });
}

}  // namespace

template <Real T>
Var<T> mhsa_forward(const Var<T>& x, std::size_t batch, AttentionParams<T>& params,
                    const MaskKind& kind, const RoPECache<T>* rope,
                    const AttentionCapture& capture) {
  const std::size_t d = params.embed_dim();
  const std::size_t heads = params.num_heads;
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const Shape& xs = x.shape();
  if (xs.size() != 2 || xs[1] != d || batch == 0 || xs[0] % batch != 0) {
    throw ShapeError("mhsa_forward: input " + shape_to_string(xs) + " vs embed_dim " +
                     std::to_string(d) + " and batch " + std::to_string(batch));
  }
  const std::size_t n = xs[0] / batch;
  const std::size_t hd = d / heads;
  Tape<T>& tape = x.tape();

  Var<T> q = regroup_heads(matmul(x, tape.leaf(params.w_q)), batch, n, heads, hd, true);
  Var<T> k = regroup_heads(matmul(x, tape.leaf(params.w_k)), batch, n, heads, hd, true);
  Var<T> v = regroup_heads(matmul(x, tape.leaf(params.w_v)), batch, n, heads, hd, true);
  if (rope) {
    std::vector<std::size_t> positions(n);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    q = apply_rope(q, positions, *rope);
    k = apply_rope(k, positions, *rope);
  }
  Var<T> scores = bmm(q, k, true, static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));

  Var<T> attn;
  try {
    switch (kind.type()) {
      case MaskKind::Type::Bidirectional:
        attn = softmax_rows(scores);
        break;
      case MaskKind::Type::Causal:
      case MaskKind::Type::ModifiedCausal:
        attn = softmax_rows(add_tiled(scores, tape.constant(build_additive_mask<T>(kind, n))));
        break;
      case MaskKind::Type::Soft:
        attn = mul_tiled(softmax_rows(scores), tape.constant(build_soft_mask<T>(kind.alpha(), n)));
        break;
    }
  } catch (const DegenerateRowError& e) {
    const std::size_t group = e.row() / n;
    throw AttentionCollapseError(capture.layer, group % heads + 1, e.row() % n);
  }

  if (capture.sink) {
    const T* ap = attn.value().ptr();
    for (std::size_t g = 0; g < batch * heads; ++g) {
      AttentionRecord rec;
      rec.layer = capture.layer;
      rec.head = g % heads + 1;
      rec.sample = g / heads;
      rec.matrix = Tensor<float>({n, n});
      for (std::size_t i = 0; i < n * n; ++i) rec.matrix[i] = static_cast<float>(ap[g * n * n + i]);
      capture.sink->push_back(std::move(rec));
    }
  }

  Var<T> context = regroup_heads(bmm(attn, v), batch, n, heads, hd, false);
  return matmul(context, tape.leaf(params.w_o));
}

template <Real T>
std::pair<Tensor<T>, std::vector<AttentionRecord>> mhsa_forward(
    const Tensor<T>& x, const AttentionParams<T>& params, const MaskKind& kind,
    const RoPECache<T>* rope, bool capture) {
  Tape<T> tape;
  AttentionParams<T> copy = params;
  std::vector<AttentionRecord> records;
  AttentionCapture cap;
  if (capture) cap.sink = &records;
  Tensor<T> out = mhsa_forward(tape.constant(x), 1, copy, kind, rope, cap).value();
  return {std::move(out), std::move(records)};
}

#define ILLAMA_INSTANTIATE_ATTENTION(T)                                                   \
  template Tensor<T> build_additive_mask<T>(const MaskKind&, std::size_t);                \
  template Tensor<T> build_soft_mask<T>(double, std::size_t);                             \
  template Var<T> mhsa_forward(const Var<T>&, std::size_t, AttentionParams<T>&,           \
                               const MaskKind&, const RoPECache<T>*,                      \
                               const AttentionCapture&);                                  \
  template std::pair<Tensor<T>, std::vector<AttentionRecord>> mhsa_forward(               \
      const Tensor<T>&, const AttentionParams<T>&, const MaskKind&, const RoPECache<T>*, \
      bool);

ILLAMA_INSTANTIATE_ATTENTION(float)
ILLAMA_INSTANTIATE_ATTENTION(double)

}  // namespace illama
