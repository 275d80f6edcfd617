#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "illama/tape.hpp"
#include "illama/tensor.hpp"

namespace illama {

/// Mean over rows of -sum_k t'_k log softmax(logits)_k with
/// t' = (1 - smoothing) * t + smoothing / K. logits and targets are [B,K].
template <Real T>
Var<T> cross_entropy_smoothed(const Var<T>& logits, const Tensor<T>& targets, double smoothing);

/// Value form.
template <Real T>
double cross_entropy_smoothed(const Tensor<T>& logits, const Tensor<T>& targets, double smoothing);

/// [labels.size(), K] one-hot rows.
template <Real T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels, std::size_t num_classes);

}  // namespace illama
