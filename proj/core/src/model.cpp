#include "illama/model.hpp"

#include <algorithm>
#include <numeric>

#include "illama/errors.hpp"
#include "illama/ops.hpp"

namespace illama {

std::string to_string(ClsPlacement placement) {
  return placement == ClsPlacement::Front ? "front" : "post";
}

ClsPlacement parse_cls_placement(std::string_view text) {
  if (text == "front") return ClsPlacement::Front;
  if (text == "post" || text == "post_sequence") return ClsPlacement::PostSequence;
  throw ConfigError("unknown class-token placement '" + std::string(text) +
                    "' (expected front or post)");
}

std::size_t ModelConfig::num_patches() const {
  if (patch_size == 0) return 0;
  const std::size_t side = image_size / patch_size;
  return side * side;
}

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> v;
  auto positive = [&](std::size_t x, const char* field) {
    if (x == 0) v.push_back(std::string(field) + " must be positive");
  };
  positive(depth, "depth");
  positive(embed_dim, "embed_dim");
  positive(num_heads, "num_heads");
  positive(patch_size, "patch_size");
  positive(image_size, "image_size");
  positive(in_channels, "in_channels");
  positive(num_classes, "num_classes");
  positive(ffn_multiple_of, "ffn_multiple_of");
  if (num_heads && embed_dim % num_heads != 0) {
    v.push_back("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                std::to_string(num_heads));
  } else if (num_heads && head_dim() % 2 != 0) {
    v.push_back("head_dim " + std::to_string(head_dim()) + " must be even for RoPE");
  }
  if (patch_size && image_size % patch_size != 0) {
    v.push_back("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                std::to_string(patch_size));
  }
  if (!(norm_eps > 0)) v.push_back("norm_eps must be positive");
  if (!(init_std > 0)) v.push_back("init_std must be positive");
  if (!(rope_base > 1)) v.push_back("rope_base must exceed 1");
  if (mask.is_soft()) v.push_back("inference mask must be bidirectional, causal or modified_causal");
  return v;
}

void ModelConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid model config '" + name + "':";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

const std::vector<std::string>& ModelConfig::preset_names() {
  static const std::vector<std::string> names{"micro", "tiny", "small", "base", "large"};
  return names;
}

ModelConfig ModelConfig::preset(std::string_view name) {
  ModelConfig c;
  c.name = std::string(name);
  auto imagenet = [&](std::size_t depth, std::size_t dim, std::size_t heads) {
    c.depth = depth;
    c.embed_dim = dim;
    c.num_heads = heads;
    c.patch_size = 16;
    c.image_size = 224;
    c.in_channels = 3;
    c.num_classes = 1000;
    c.ffn_multiple_of = 256;
  };
  if (name == "micro") {
    // defaults
  } else if (name == "tiny") {
    imagenet(12, 192, 3);
  } else if (name == "small") {
    imagenet(12, 384, 6);
  } else if (name == "base") {
    imagenet(12, 768, 12);
  } else if (name == "large") {
    imagenet(24, 1024, 16);
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) +
                      "' (expected micro, tiny, small, base or large)");
  }
  return c;
}

std::size_t param_count(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.embed_dim;
  const std::size_t h = c.ffn_hidden();
  const std::size_t patch = c.patch_size * c.patch_size * c.in_channels * d + d;
  const std::size_t block = 4 * d * d + 3 * d * h + 2 * d;
  return patch + d + c.num_tokens() * d + c.depth * block + d + d * c.num_classes +
         c.num_classes;
}

template <Real T>
Model<T> Model<T>::allocate(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.embed_dim;
  const std::size_t h = config.ffn_hidden();
  const T eps = static_cast<T>(config.norm_eps);
  Model m;
  m.config = config;
  m.patch_embed.patch_size = config.patch_size;
  m.patch_embed.in_channels = config.in_channels;
  m.patch_embed.embed_dim = d;
  m.patch_embed.projection = Tensor<T>({config.patch_size * config.patch_size * config.in_channels, d});
  m.patch_embed.bias = Tensor<T>({d});
  m.cls_token = Tensor<T>({d});
  m.lpe.table = Tensor<T>({config.num_tokens(), d});
  m.blocks.resize(config.depth);
  for (auto& b : m.blocks) {
    b.norm1 = {Tensor<T>::ones({d}), eps};
    b.attn.w_q = Tensor<T>({d, d});
    b.attn.w_k = Tensor<T>({d, d});
    b.attn.w_v = Tensor<T>({d, d});
    b.attn.w_o = Tensor<T>({d, d});
    b.attn.num_heads = config.num_heads;
    b.norm2 = {Tensor<T>::ones({d}), eps};
    b.ffn.w_gate = Tensor<T>({d, h});
    b.ffn.w_up = Tensor<T>({d, h});
    b.ffn.w_down = Tensor<T>({h, d});
  }
  m.final_norm = {Tensor<T>::ones({d}), eps};
  m.head_weight = Tensor<T>({d, config.num_classes});
  m.head_bias = Tensor<T>({config.num_classes});
  m.rope = RoPECache<T>(config.num_tokens(), config.head_dim(), config.rope_base);
  for_each_parameter(m, [](const std::string&, Tensor<T>& t) { t.set_requires_grad(true); });
  return m;
}

template <Real T>
void Model<T>::zero_grad() {
  for_each_parameter(*this, [](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

namespace {

bool is_random_init(const std::string& name) {
  return name.find("gamma") == std::string::npos && name.find("bias") == std::string::npos;
}

}  // namespace

template <Real T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  Model<T> m = Model<T>::allocate(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double std = config.init_std;
  for_each_parameter(m, [&](const std::string& name, Tensor<T>& t) {
    if (!is_random_init(name)) return;
    for (auto& v : t.data()) {
      double z = normal(rng);
      while (std::abs(z) > 2.0) z = normal(rng);
      v = static_cast<T>(z * std);
    }
  });
  return m;
}

template <Real T>
Tensor<T> insert_cls(const Tensor<T>& tokens, const Tensor<T>& cls, ClsPlacement placement) {
  if (tokens.rank() != 2 || cls.numel() != tokens.dim(1)) {
    throw ShapeError("insert_cls: tokens " + shape_to_string(tokens.shape()) + " vs cls " +
                     shape_to_string(cls.shape()));
  }
  Tape<T> tape;
  return insert_cls(tape.constant(tokens), tape.constant(cls), 1, placement).value();
}

template <Real T>
Var<T> insert_cls(const Var<T>& tokens, const Var<T>& cls, std::size_t batch,
                  ClsPlacement placement) {
  const Shape& ts = tokens.shape();
  if (ts.size() != 2 || batch == 0 || ts[0] % batch != 0 || cls.numel() != ts[1]) {
    throw ShapeError("insert_cls: tokens " + shape_to_string(ts) + " vs cls " +
                     shape_to_string(cls.shape()) + " with batch " + std::to_string(batch));
  }
  const std::size_t n = ts[0] / batch;
  const std::size_t d = ts[1];
  const std::size_t at = placement == ClsPlacement::Front ? 0 : n;
  // Output row of input token row r within one sequence.
  auto dst_row = [at](std::size_t r) { return r < at ? r : r + 1; };
  Tensor<T> out({batch * (n + 1), d});
  const T* tp = tokens.value().ptr();
  const T* cp = cls.value().ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    T* seq = out.ptr() + b * (n + 1) * d;
    for (std::size_t r = 0; r < n; ++r) std::copy_n(tp + (b * n + r) * d, d, seq + dst_row(r) * d);
    std::copy_n(cp, d, seq + at * d);
  }
  return tokens.tape().record(std::move(out), {tokens, cls}, [=](std::span<const T> g) {
    Tape<T>& tape = tokens.tape();
    if (tokens.needs_grad()) {
      auto dt = tape.grad_of(tokens);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < n; ++r) {
          const T* src = g.data() + (b * (n + 1) + dst_row(r)) * d;
          T* dst = dt.data() + (b * n + r) * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
    }
    if (cls.needs_grad()) {
      auto dc = tape.grad_of(cls);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* src = g.data() + (b * (n + 1) + at) * d;
        for (std::size_t j = 0; j < d; ++j) dc[j] += src[j];
      }
    }
  });
}

template <Real T>
Var<T> forward(Model<T>& model, const Var<T>& images, const ForwardOptions& options) {
  const ModelConfig& c = model.config;
  const Shape& is = images.shape();
  if (is.size() != 4 || is[1] != c.in_channels || is[2] != c.image_size || is[3] != c.image_size) {
    throw ConfigError("images " + shape_to_string(is) + " do not match model input [B," +
                      std::to_string(c.in_channels) + "," + std::to_string(c.image_size) + "," +
                      std::to_string(c.image_size) + "]");
  }
  if (model.blocks.size() != c.depth) {
    throw ConfigError("model has " + std::to_string(model.blocks.size()) + " blocks but depth " +
                      std::to_string(c.depth));
  }
  const std::size_t batch = is[0];
  const std::size_t n_tok = c.num_tokens();
  Tape<T>& tape = images.tape();

  Var<T> x = patchify(images, model.patch_embed);
  x = insert_cls(x, tape.leaf(model.cls_token), batch, c.cls_placement);
  x = add_lpe(x, model.lpe);

  const bool drop = options.drop_path > 0.0 && options.rng != nullptr && c.depth > 1;
  auto drop_factors = [&](std::size_t layer) {
    const double rate = options.drop_path * static_cast<double>(layer) /
                        static_cast<double>(c.depth - 1);
    std::vector<T> f(batch, T{1});
    if (rate <= 0.0) return f;
    std::bernoulli_distribution keep(1.0 - rate);
    for (auto& v : f) v = keep(*options.rng) ? static_cast<T>(1.0 / (1.0 - rate)) : T{0};
    return f;
  };

  for (std::size_t i = 0; i < c.depth; ++i) {
    Block<T>& blk = model.blocks[i];
    AttentionCapture cap;
    cap.layer = i + 1;
    if (options.capture &&
        (options.capture_layers.empty() ||
         std::find(options.capture_layers.begin(), options.capture_layers.end(), i + 1) !=
             options.capture_layers.end())) {
      cap.sink = options.capture;
    }
    Var<T> a = mhsa_forward(rmsnorm(x, blk.norm1), batch, blk.attn, options.mask, &model.rope, cap);
    if (drop) a = scale_row_blocks(a, drop_factors(i));
    x = add(x, a);
    Var<T> f = swiglu(rmsnorm(x, blk.norm2), blk.ffn);
    if (drop) f = scale_row_blocks(f, drop_factors(i));
    x = add(x, f);
  }

  std::vector<std::size_t> rows(batch);
  const std::size_t r = cls_row(c.cls_placement, n_tok);
  for (std::size_t b = 0; b < batch; ++b) rows[b] = b * n_tok + r;
  Var<T> z = rmsnorm(gather_rows(x, std::move(rows)), model.final_norm);
  return add_tiled(matmul(z, tape.leaf(model.head_weight)), tape.leaf(model.head_bias));
}

template <Real T>
Tensor<T> predict(const Model<T>& model, const Tensor<T>& images, const MaskKind& mask) {
  Tape<T> tape;
  // forward() takes leaves of the parameters; without a backward() call the
  // tensors are only read.
  ForwardOptions opt;
  opt.mask = mask;
  return forward(const_cast<Model<T>&>(model), tape.constant(images), opt).value();
}

#define ILLAMA_INSTANTIATE_MODEL(T)                                                         \
  template struct Model<T>;                                                                 \
  template Model<T> build_model<T>(const ModelConfig&, std::uint64_t);                      \
  template Tensor<T> insert_cls(const Tensor<T>&, const Tensor<T>&, ClsPlacement);          \
  template Var<T> insert_cls(const Var<T>&, const Var<T>&, std::size_t, ClsPlacement);      \
  template Var<T> forward(Model<T>&, const Var<T>&, const ForwardOptions&);                 \
  template Tensor<T> predict(const Model<T>&, const Tensor<T>&, const MaskKind&);

ILLAMA_INSTANTIATE_MODEL(float)
ILLAMA_INSTANTIATE_MODEL(double)

}  // namespace illama
