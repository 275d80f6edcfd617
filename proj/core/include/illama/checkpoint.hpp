#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "illama/model.hpp"

namespace illama {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model<float> model;
  std::size_t epoch = 0;
};

/// "ILMA", u32 version, u32-prefixed key=value config text, u32 parameter
/// count, then per parameter: u32-prefixed name, u32 rank, u32 dims, f32 data.
/// Written atomically.
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     std::size_t epoch);

/// FormatError on any mismatch between the header config and the stored
/// parameters (missing, duplicate, unknown or misshapen).
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace illama
