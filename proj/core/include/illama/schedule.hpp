#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace illama {

enum class SoftMaskScheme { Linear, Constant };

std::string to_string(SoftMaskScheme scheme);
SoftMaskScheme parse_softmask_scheme(std::string_view text);

/// Weight alpha of the bidirectional part of the soft mask, per epoch.
/// cutoff_epochs = 0 disables the soft mask.
struct SoftMaskSchedule {
  SoftMaskScheme scheme = SoftMaskScheme::Constant;
  std::size_t cutoff_epochs = 0;
  double alpha0 = 1.0;  // value held by the constant scheme
  bool operator==(const SoftMaskSchedule&) const = default;
};

/// Linear: max(0, 1 - epoch/cutoff). Constant: alpha0 before the cutoff.
/// Zero from the cutoff on.
double alpha_at(const SoftMaskSchedule& s, std::size_t epoch);

/// Linear warmup from 0 to base_lr, then half-cosine down to 0 at
/// total_epochs.
struct LrSchedule {
  double base_lr = 4e-3;
  double warmup_epochs = 5.0;
  double total_epochs = 20.0;
};

/// fractional_epoch is clamped to [0, total_epochs].
double lr_at(const LrSchedule& s, double fractional_epoch);

}  // namespace illama
