#include "illama/layers.hpp"

#include <cmath>

#include "illama/errors.hpp"
#include "illama/ops.hpp"

namespace illama {

std::size_t swiglu_hidden(std::size_t embed_dim, std::size_t multiple_of) {
  if (multiple_of == 0) throw ConfigError("swiglu_hidden: multiple_of must be positive");
  const std::size_t raw = 8 * embed_dim / 3;
  return (raw + multiple_of - 1) / multiple_of * multiple_of;
}

template <Real T>
RoPECache<T>::RoPECache(std::size_t max_positions, std::size_t head_dim, double base)
    : max_positions_(max_positions), head_dim_(head_dim), base_(base) {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw ConfigError("RoPE needs an even head_dim, got " + std::to_string(head_dim));
  }
  if (max_positions == 0) throw ConfigError("RoPE needs at least one position");
  const std::size_t half = head_dim / 2;
  cos_ = Tensor<T>({max_positions, half});
  sin_ = Tensor<T>({max_positions, half});
  for (std::size_t m = 0; m < max_positions; ++m) {
    for (std::size_t i = 0; i < half; ++i) {
      const double theta =
          std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
      const double angle = static_cast<double>(m) * theta;
      cos_.at(m, i) = static_cast<T>(std::cos(angle));
      sin_.at(m, i) = static_cast<T>(std::sin(angle));
    }
  }
}

template <Real T>
Var<T> extract_patches(const Var<T>& images, std::size_t p) {
  const Shape& s = images.shape();
  if (s.size() != 4) {
    throw ShapeError("extract_patches: expected [B,C,H,W], got " + shape_to_string(s));
  }
  const std::size_t batch = s[0], ch = s[1], h = s[2], w = s[3];
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw ShapeError("extract_patches: " + std::to_string(h) + "x" + std::to_string(w) +
                     " image is not divisible by patch " + std::to_string(p));
  }
  const std::size_t gh = h / p, gw = w / p, tokens = gh * gw, width = ch * p * p;
  Tensor<T> out({batch * tokens, width});
  const T* src = images.value().ptr();
  // Maps (b, token, feature) -> image offset; shared by forward and backward.
  auto offset = [=](std::size_t b, std::size_t py, std::size_t px, std::size_t c,
                    std::size_t dy, std::size_t dx) {
    return ((b * ch + c) * h + py * p + dy) * w + px * p + dx;
  };
  T* dst = out.ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t py = 0; py < gh; ++py) {
      for (std::size_t px = 0; px < gw; ++px) {
        for (std::size_t c = 0; c < ch; ++c) {
          for (std::size_t dy = 0; dy < p; ++dy) {
            for (std::size_t dx = 0; dx < p; ++dx) *dst++ = src[offset(b, py, px, c, dy, dx)];
          }
        }
      }
    }
  }
  return images.tape().record(
      std::move(out), {images}, [images, batch, gh, gw, ch, p, offset](std::span<const T> g) {
        auto di = images.tape().grad_of(images);
        const T* gp = g.data();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t py = 0; py < gh; ++py) {
            for (std::size_t px = 0; px < gw; ++px) {
              for (std::size_t c = 0; c < ch; ++c) {
                for (std::size_t dy = 0; dy < p; ++dy) {
                  for (std::size_t dx = 0; dx < p; ++dx) di[offset(b, py, px, c, dy, dx)] += *gp++;
                }
              }
            }
          }
        }
      });
}

template <Real T>
Var<T> patchify(const Var<T>& images, PatchEmbed<T>& pe) {
  if (images.shape().size() != 4 || images.shape()[1] != pe.in_channels) {
    throw ShapeError("patchify: image shape " + shape_to_string(images.shape()) +
                     " does not match " + std::to_string(pe.in_channels) + " channels");
  }
  Tape<T>& tape = images.tape();
  Var<T> patches = extract_patches(images, pe.patch_size);
  return add_tiled(matmul(patches, tape.leaf(pe.projection)), tape.leaf(pe.bias));
}

template <Real T>
Var<T> rmsnorm(const Var<T>& x, const Var<T>& gamma, T eps) {
  const std::size_t d = gamma.numel();
  if (x.shape().empty() || x.shape().back() != d) {
    throw ShapeError("rmsnorm: input " + shape_to_string(x.shape()) + " vs gamma " +
                     shape_to_string(gamma.shape()));
  }
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  std::vector<T> inv_rms(rows);
  const T* xp = x.value().ptr();
  const T* gp = gamma.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += static_cast<double>(xp[r * d + j]) * xp[r * d + j];
    const T inv = static_cast<T>(1.0 / std::sqrt(ss / static_cast<double>(d) + eps));
    inv_rms[r] = inv;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xp[r * d + j] * inv * gp[j];
  }
  return x.tape().record(
      std::move(out), {x, gamma},
      [x, gamma, rows, d, inv_rms = std::move(inv_rms)](std::span<const T> g) {
        Tape<T>& t = x.tape();
        const T* xp = x.value().ptr();
        const T* gp = gamma.value().ptr();
        if (x.needs_grad()) {
          auto dx = t.grad_of(x);
          for (std::size_t r = 0; r < rows; ++r) {
            const T inv = inv_rms[r];
            double dot = 0;
            for (std::size_t j = 0; j < d; ++j) {
              dot += static_cast<double>(g[r * d + j]) * gp[j] * xp[r * d + j];
            }
            const T coef = static_cast<T>(dot * inv * inv * inv / static_cast<double>(d));
            for (std::size_t j = 0; j < d; ++j) {
              dx[r * d + j] += inv * g[r * d + j] * gp[j] - xp[r * d + j] * coef;
            }
          }
        }
        if (gamma.needs_grad()) {
          auto dg = t.grad_of(gamma);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) dg[j] += g[r * d + j] * xp[r * d + j] * inv_rms[r];
          }
        }
      });
}

template <Real T>
Var<T> rmsnorm(const Var<T>& x, RMSNormParams<T>& p) {
  return rmsnorm(x, x.tape().leaf(p.gamma), p.eps);
}

template <Real T>
Var<T> swiglu(const Var<T>& x, SwiGLUParams<T>& p) {
  Tape<T>& tape = x.tape();
  Var<T> gate = silu(matmul(x, tape.leaf(p.w_gate)));
  Var<T> up = matmul(x, tape.leaf(p.w_up));
  return matmul(mul(gate, up), tape.leaf(p.w_down));
}

template <Real T>
Var<T> apply_rope(const Var<T>& qk, std::span<const std::size_t> positions,
                  const RoPECache<T>& cache) {
  const Shape& s = qk.shape();
  if (s.size() < 2) throw ShapeError("apply_rope: expected [..., N, head_dim]");
  const std::size_t hd = s.back(), n = s[s.size() - 2];
  if (hd != cache.head_dim()) {
    throw ShapeError("apply_rope: head_dim " + std::to_string(hd) + " vs cache " +
                     std::to_string(cache.head_dim()));
  }
  if (positions.size() != n) throw ShapeError("apply_rope: one position per row required");
  for (auto pos : positions) {
    if (pos >= cache.max_positions()) throw RangeError("apply_rope: position outside cache");
  }
  const std::size_t half = hd / 2, groups = qk.numel() / (n * hd);
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  Tensor<T> out(s);
  const T* in = qk.value().ptr();
  const T* cp = cache.cos().ptr();
  const T* sp = cache.sin().ptr();
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t o = (g * n + r) * hd;
      const T* c = cp + pos[r] * half;
      const T* sn = sp + pos[r] * half;
      for (std::size_t i = 0; i < half; ++i) {
        const T x0 = in[o + 2 * i], x1 = in[o + 2 * i + 1];
        out[o + 2 * i] = x0 * c[i] - x1 * sn[i];
        out[o + 2 * i + 1] = x0 * sn[i] + x1 * c[i];
      }
    }
  }
  return qk.tape().record(
      std::move(out), {qk},
      [qk, pos = std::move(pos), &cache, groups, n, hd, half](std::span<const T> g) {
        auto d = qk.tape().grad_of(qk);
        const T* cp = cache.cos().ptr();
        const T* sp = cache.sin().ptr();
        for (std::size_t gi = 0; gi < groups; ++gi) {
          for (std::size_t r = 0; r < n; ++r) {
            const std::size_t o = (gi * n + r) * hd;
            const T* c = cp + pos[r] * half;
            const T* sn = sp + pos[r] * half;
            for (std::size_t i = 0; i < half; ++i) {
              const T g0 = g[o + 2 * i], g1 = g[o + 2 * i + 1];
              d[o + 2 * i] += g0 * c[i] + g1 * sn[i];
              d[o + 2 * i + 1] += -g0 * sn[i] + g1 * c[i];
            }
          }
        }
      });
}

template <Real T>
Var<T> add_lpe(const Var<T>& tokens, LPETable<T>& lpe) {
  const Shape& ts = tokens.shape();
  const Shape& ls = lpe.table.shape();
  if (ts.size() != 2 || ls.size() != 2 || ts[1] != ls[1] || ts[0] % ls[0] != 0) {
    throw ShapeError("add_lpe: tokens " + shape_to_string(ts) + " vs table " +
                     shape_to_string(ls));
  }
  return add_tiled(tokens, tokens.tape().leaf(lpe.table));
}

// Value forms run the tape ops on constants.

template <Real T>
Tensor<T> patchify(const Tensor<T>& image, const PatchEmbed<T>& pe) {
  if (image.rank() != 3) {
    throw ShapeError("patchify: expected [C,H,W], got " + shape_to_string(image.shape()));
  }
  Tape<T> tape;
  PatchEmbed<T> copy = pe;
  Shape batched{1, image.dim(0), image.dim(1), image.dim(2)};
  return patchify(tape.constant(image.reshaped(batched)), copy).value();
}

template <Real T>
Tensor<T> rmsnorm(const Tensor<T>& x, const RMSNormParams<T>& p) {
  Tape<T> tape;
  return rmsnorm(tape.constant(x), tape.constant(p.gamma), p.eps).value();
}

template <Real T>
Tensor<T> swiglu(const Tensor<T>& x, const SwiGLUParams<T>& p) {
  Tape<T> tape;
  SwiGLUParams<T> copy = p;
  return swiglu(tape.constant(x), copy).value();
}

template <Real T>
Tensor<T> apply_rope(const Tensor<T>& qk, std::span<const std::size_t> positions,
                     const RoPECache<T>& cache) {
  Tape<T> tape;
  return apply_rope(tape.constant(qk), positions, cache).value();
}

template <Real T>
Tensor<T> add_lpe(const Tensor<T>& tokens, const LPETable<T>& lpe) {
  if (tokens.shape() != lpe.table.shape()) {
    throw ShapeError("add_lpe: token count " + shape_to_string(tokens.shape()) +
                     " does not match table " + shape_to_string(lpe.table.shape()));
  }
  Tape<T> tape;
  LPETable<T> copy = lpe;
  return add_lpe(tape.constant(tokens), copy).value();
}

#define ILLAMA_INSTANTIATE_LAYERS(T)                                                  \
  template class RoPECache<T>;                                                        \
  template Var<T> extract_patches(const Var<T>&, std::size_t);                        \
  template Var<T> patchify(const Var<T>&, PatchEmbed<T>&);                            \
  template Var<T> rmsnorm(const Var<T>&, const Var<T>&, T);                           \
  template Var<T> rmsnorm(const Var<T>&, RMSNormParams<T>&);                          \
  template Var<T> swiglu(const Var<T>&, SwiGLUParams<T>&);                            \
  template Var<T> apply_rope(const Var<T>&, std::span<const std::size_t>,             \
                             const RoPECache<T>&);                                    \
  template Var<T> add_lpe(const Var<T>&, LPETable<T>&);                               \
  template Tensor<T> patchify(const Tensor<T>&, const PatchEmbed<T>&);                \
  template Tensor<T> rmsnorm(const Tensor<T>&, const RMSNormParams<T>&);              \
  template Tensor<T> swiglu(const Tensor<T>&, const SwiGLUParams<T>&);                \
  template Tensor<T> apply_rope(const Tensor<T>&, std::span<const std::size_t>,       \
                                const RoPECache<T>&);                                 \
  template Tensor<T> add_lpe(const Tensor<T>&, const LPETable<T>&);

ILLAMA_INSTANTIATE_LAYERS(float)
ILLAMA_INSTANTIATE_LAYERS(double)

}  // namespace illama
