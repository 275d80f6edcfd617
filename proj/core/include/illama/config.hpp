#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "illama/model.hpp"
#include "illama/training.hpp"

namespace illama {

/// Ordered key=value pairs; later duplicates win when applied.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// One key=value per line; blank lines and '#' comments are skipped.
/// ConfigError with the line number on anything else.
KeyValues parse_key_values(std::string_view text, std::string_view source = "config");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

/// Model fields as key=value (preset-independent, fully resolved).
KeyValues model_config_keys(const ModelConfig& c);
/// Returns false when the key is not a model key; ConfigError on a bad value.
bool apply_model_key(ModelConfig& c, std::string_view key, std::string_view value);
/// Starts from `preset` when present, then applies every model key.
/// ConfigError on an unknown key.
ModelConfig model_config_from(const KeyValues& kv);

KeyValues train_config_keys(const TrainConfig& c);
bool apply_train_key(TrainConfig& c, std::string_view key, std::string_view value);

struct ExperimentConfig {
  std::string preset = "micro";
  ModelConfig model = ModelConfig::preset("micro");
  TrainConfig train;
  std::string dataset = "mnist";
  std::string data_dir;  // empty: $ILLAMA_DATA_ROOT/<dataset>
  std::string out_dir = "runs/default";
  std::size_t train_limit = 0;  // 0 = full split
  std::size_t test_limit = 0;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Applies `preset` first, then all other keys in order. The dataset fixes
/// in_channels, image_size and num_classes. ConfigError on unknown keys.
ExperimentConfig experiment_from(const KeyValues& kv);
/// Every field, so that experiment_from(parse(to_text(e))) == e.
std::string experiment_to_text(const ExperimentConfig& e);

/// data_dir, else $ILLAMA_DATA_ROOT/<dataset>; ConfigError when neither.
std::filesystem::path resolve_data_dir(const ExperimentConfig& e);

/// Shortest text that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace illama
