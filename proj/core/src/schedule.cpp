#include "illama/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "illama/errors.hpp"

namespace illama {

std::string to_string(SoftMaskScheme scheme) {
  return scheme == SoftMaskScheme::Linear ? "linear" : "constant";
}

SoftMaskScheme parse_softmask_scheme(std::string_view text) {
  if (text == "linear") return SoftMaskScheme::Linear;
  if (text == "constant") return SoftMaskScheme::Constant;
  throw ConfigError("unknown soft-mask scheme '" + std::string(text) +
                    "' (expected linear or constant)");
}

double alpha_at(const SoftMaskSchedule& s, std::size_t epoch) {
  if (epoch >= s.cutoff_epochs) return 0.0;
  if (s.scheme == SoftMaskScheme::Constant) return s.alpha0;
  return std::max(0.0, 1.0 - static_cast<double>(epoch) / static_cast<double>(s.cutoff_epochs));
}

double lr_at(const LrSchedule& s, double fractional_epoch) {
  const double e = std::clamp(fractional_epoch, 0.0, s.total_epochs);
  if (e < s.warmup_epochs) return s.base_lr * e / s.warmup_epochs;
  const double span = s.total_epochs - s.warmup_epochs;
  if (span <= 0.0) return s.base_lr;
  const double progress = (e - s.warmup_epochs) / span;
  return 0.5 * s.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace illama
