#include "illama/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "illama/dataset.hpp"
#include "illama/errors.hpp"
#include "illama/io_util.hpp"

namespace illama {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string bad_value(std::string_view key, std::string_view value, const char* expected) {
  return "config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " +
         expected;
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(bad_value(key, v, "a count"));
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(bad_value(key, v, "an integer"));
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(bad_value(key, v, "a number"));
  }
  return out;
}

MaskKind to_mask(std::string_view key, std::string_view v) {
  try {
    return MaskKind::parse(std::string(v));
  } catch (const Error& e) {
    throw ConfigError("config key '" + std::string(key) + "': " + e.what());
  }
}

constexpr const char* kExperimentKeys[] = {"preset", "dataset", "data_dir", "out", "train_limit",
                                           "test_limit"};

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

KeyValues parse_key_values(std::string_view text, std::string_view source) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) +
                        ": expected key=value, got '" + std::string(line) + "'");
    }
    kv.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

KeyValues model_config_keys(const ModelConfig& c) {
  return {
      {"model_name", c.name},
      {"depth", std::to_string(c.depth)},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"num_heads", std::to_string(c.num_heads)},
      {"patch_size", std::to_string(c.patch_size)},
      {"image_size", std::to_string(c.image_size)},
      {"in_channels", std::to_string(c.in_channels)},
      {"num_classes", std::to_string(c.num_classes)},
      {"cls", to_string(c.cls_placement)},
      {"mask", c.mask.to_string()},
      {"ffn_multiple_of", std::to_string(c.ffn_multiple_of)},
      {"rope_base", format_double(c.rope_base)},
      {"norm_eps", format_double(c.norm_eps)},
      {"init_std", format_double(c.init_std)},
  };
}

bool apply_model_key(ModelConfig& c, std::string_view k, std::string_view v) {
  if (k == "model_name") c.name = std::string(v);
  else if (k == "depth") c.depth = to_size(k, v);
  else if (k == "embed_dim") c.embed_dim = to_size(k, v);
  else if (k == "num_heads") c.num_heads = to_size(k, v);
  else if (k == "patch_size") c.patch_size = to_size(k, v);
  else if (k == "image_size") c.image_size = to_size(k, v);
  else if (k == "in_channels") c.in_channels = to_size(k, v);
  else if (k == "num_classes") c.num_classes = to_size(k, v);
  else if (k == "cls") c.cls_placement = parse_cls_placement(v);
  else if (k == "mask") c.mask = to_mask(k, v);
  else if (k == "ffn_multiple_of") c.ffn_multiple_of = to_size(k, v);
  else if (k == "rope_base") c.rope_base = to_double(k, v);
  else if (k == "norm_eps") c.norm_eps = to_double(k, v);
  else if (k == "init_std") c.init_std = to_double(k, v);
  else return false;
  return true;
}

ModelConfig model_config_from(const KeyValues& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "preset") c = ModelConfig::preset(v);
  }
  for (const auto& [k, v] : kv) {
    if (k == "preset") continue;
    if (!apply_model_key(c, k, v)) throw ConfigError("unknown model config key '" + k + "'");
  }
  c.validate();
  return c;
}

KeyValues train_config_keys(const TrainConfig& c) {
  return {
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"lr", format_double(c.base_lr)},
      {"warmup_epochs", format_double(c.warmup_epochs)},
      {"weight_decay", format_double(c.weight_decay)},
      {"beta1", format_double(c.beta1)},
      {"beta2", format_double(c.beta2)},
      {"adam_eps", format_double(c.adam_eps)},
      {"label_smoothing", format_double(c.label_smoothing)},
      {"mixup", format_double(c.mixup_alpha)},
      {"cutmix", format_double(c.cutmix_alpha)},
      {"drop_path", format_double(c.drop_path)},
      {"seed", std::to_string(c.seed)},
      {"softmask_scheme", to_string(c.softmask.scheme)},
      {"cutoff_epochs", std::to_string(c.softmask.cutoff_epochs)},
      {"softmask_alpha0", format_double(c.softmask.alpha0)},
      {"eval_batch", std::to_string(c.eval_batch)},
  };
}

bool apply_train_key(TrainConfig& c, std::string_view k, std::string_view v) {
  if (k == "epochs") c.epochs = to_size(k, v);
  else if (k == "batch_size") c.batch_size = to_size(k, v);
  else if (k == "lr") c.base_lr = to_double(k, v);
  else if (k == "warmup_epochs") c.warmup_epochs = to_double(k, v);
  else if (k == "weight_decay") c.weight_decay = to_double(k, v);
  else if (k == "beta1") c.beta1 = to_double(k, v);
  else if (k == "beta2") c.beta2 = to_double(k, v);
  else if (k == "adam_eps") c.adam_eps = to_double(k, v);
  else if (k == "label_smoothing") c.label_smoothing = to_double(k, v);
  else if (k == "mixup") c.mixup_alpha = to_double(k, v);
  else if (k == "cutmix") c.cutmix_alpha = to_double(k, v);
  else if (k == "drop_path") c.drop_path = to_double(k, v);
  else if (k == "seed") c.seed = to_u64(k, v);
  else if (k == "softmask_scheme") c.softmask.scheme = parse_softmask_scheme(v);
  else if (k == "cutoff_epochs") c.softmask.cutoff_epochs = to_size(k, v);
  else if (k == "softmask_alpha0") c.softmask.alpha0 = to_double(k, v);
  else if (k == "eval_batch") c.eval_batch = to_size(k, v);
  else return false;
  return true;
}

ExperimentConfig experiment_from(const KeyValues& kv) {
  ExperimentConfig e;
  for (const auto& [k, v] : kv) {
    if (k == "preset") {
      e.preset = v;
      e.model = ModelConfig::preset(v);
    }
  }
  for (const auto& [k, v] : kv) {
    if (k == "preset") continue;
    if (k == "dataset") {
      dataset_geometry(v);
      e.dataset = v;
    } else if (k == "data_dir") {
      e.data_dir = v;
    } else if (k == "out") {
      e.out_dir = v;
    } else if (k == "train_limit") {
      e.train_limit = to_size(k, v);
    } else if (k == "test_limit") {
      e.test_limit = to_size(k, v);
    } else if (!apply_model_key(e.model, k, v) && !apply_train_key(e.train, k, v)) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  const auto [channels, side] = dataset_geometry(e.dataset);
  e.model.in_channels = channels;
  e.model.image_size = side;
  e.model.num_classes = 10;
  e.model.validate();
  e.train.validate();
  return e;
}

std::string experiment_to_text(const ExperimentConfig& e) {
  KeyValues kv{
      {"preset", e.preset},
      {"dataset", e.dataset},
      {"data_dir", e.data_dir},
      {"out", e.out_dir},
      {"train_limit", std::to_string(e.train_limit)},
      {"test_limit", std::to_string(e.test_limit)},
  };
  for (auto& p : model_config_keys(e.model)) kv.push_back(std::move(p));
  for (auto& p : train_config_keys(e.train)) kv.push_back(std::move(p));
  return "# resolved run configuration\n" + format_key_values(kv);
}

std::filesystem::path resolve_data_dir(const ExperimentConfig& e) {
  if (!e.data_dir.empty()) return e.data_dir;
  if (const char* root = std::getenv("ILLAMA_DATA_ROOT"); root && *root) {
    return std::filesystem::path(root) / e.dataset;
  }
  throw ConfigError("no dataset directory: pass --data-dir or set ILLAMA_DATA_ROOT");
}

}  // namespace illama
