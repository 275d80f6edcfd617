#include "illama/loss.hpp"

#include <algorithm>
#include <cmath>

#include "illama/errors.hpp"

namespace illama {

namespace {

template <Real T>
void check_shapes(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.rank() != 2 || targets.shape() != logits.shape()) {
    throw ShapeError("cross_entropy: logits " + shape_to_string(logits.shape()) + " vs targets " +
                     shape_to_string(targets.shape()));
  }
}

// Per-row softmax probabilities in double and the summed loss.
template <Real T>
double forward_rows(const Tensor<T>& logits, const Tensor<T>& targets, double s,
                    std::vector<double>& probs) {
  const std::size_t rows = logits.dim(0);
  const std::size_t k = logits.dim(1);
  probs.assign(rows * k, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.ptr() + r * k;
    const T* t = targets.ptr() + r * k;
    const double mx = *std::max_element(z, z + k);
    double se = 0.0;
    for (std::size_t j = 0; j < k; ++j) se += std::exp(static_cast<double>(z[j]) - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < k; ++j) {
      const double logp = static_cast<double>(z[j]) - lse;
      probs[r * k + j] = std::exp(logp);
      const double tj = (1.0 - s) * static_cast<double>(t[j]) + s / static_cast<double>(k);
      total -= tj * logp;
    }
  }
  return total;
}

}  // namespace

template <Real T>
Var<T> cross_entropy_smoothed(const Var<T>& logits, const Tensor<T>& targets, double smoothing) {
  check_shapes(logits.value(), targets);
  std::vector<double> probs;
  const std::size_t rows = logits.value().dim(0);
  const std::size_t k = logits.value().dim(1);
  const double loss = forward_rows(logits.value(), targets, smoothing, probs) / rows;
  return logits.tape().record(
      Tensor<T>::scalar(static_cast<T>(loss)), {logits},
      [=, probs = std::move(probs)](std::span<const T> g) {
        auto dz = logits.tape().grad_of(logits);
        const double scale = static_cast<double>(g[0]) / rows;
        for (std::size_t i = 0; i < rows * k; ++i) {
          const double tj = (1.0 - smoothing) * static_cast<double>(targets[i]) +
                            smoothing / static_cast<double>(k);
          dz[i] += static_cast<T>(scale * (probs[i] - tj));
        }
      });
}

template <Real T>
double cross_entropy_smoothed(const Tensor<T>& logits, const Tensor<T>& targets, double smoothing) {
  check_shapes(logits, targets);
  std::vector<double> probs;
  return forward_rows(logits, targets, smoothing, probs) / logits.dim(0);
}

template <Real T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels, std::size_t num_classes) {
  if (labels.empty()) throw ShapeError("one_hot: empty label list");
  Tensor<T> out({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw RangeError("label " + std::to_string(labels[i]) + " outside [0," +
                       std::to_string(num_classes) + ")");
    }
    out.at(i, labels[i]) = T{1};
  }
  return out;
}

#define ILLAMA_INSTANTIATE_LOSS(T)                                                   \
  template Var<T> cross_entropy_smoothed(const Var<T>&, const Tensor<T>&, double);   \
  template double cross_entropy_smoothed(const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> one_hot<T>(std::span<const std::uint8_t>, std::size_t);

ILLAMA_INSTANTIATE_LOSS(float)
ILLAMA_INSTANTIATE_LOSS(double)

}  // namespace illama
