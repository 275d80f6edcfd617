#pragma once

#include <cstddef>
#include <vector>

#include "illama/attention.hpp"
#include "illama/dataset.hpp"
#include "illama/model.hpp"

namespace illama {

struct EvalResult {
  double accuracy = 0.0;
  /// Mean unsmoothed cross-entropy against the hard labels.
  double loss = 0.0;
  std::vector<double> confidences;  // max softmax probability per sample
  std::vector<bool> correct;
  std::vector<std::size_t> predictions;
};

/// Evaluates the first `limit` samples (all when 0) in batches.
template <Real T>
EvalResult evaluate(const Model<T>& model, const Dataset& data, const MaskKind& mask,
                    std::size_t batch_size = 256, std::size_t limit = 0);

}  // namespace illama
