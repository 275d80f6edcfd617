#include "illama/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "illama/errors.hpp"

namespace illama {

template <Real T>
EvalResult evaluate(const Model<T>& model, const Dataset& data, const MaskKind& mask,
                    std::size_t batch_size, std::size_t limit) {
  const std::size_t total = limit == 0 ? data.size() : std::min(limit, data.size());
  if (total == 0) throw UndefinedError("evaluate: empty dataset");
  if (batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
  const auto& c = model.config;
  if (data.channels() != c.in_channels || data.height() != c.image_size ||
      data.width() != c.image_size || data.num_classes != c.num_classes) {
    throw ConfigError("dataset " + data.name + " (" + shape_to_string(data.images.shape()) + ", " +
                      std::to_string(data.num_classes) + " classes) does not match the model (" +
                      std::to_string(c.in_channels) + "x" + std::to_string(c.image_size) + "x" +
                      std::to_string(c.image_size) + ", " + std::to_string(c.num_classes) +
                      " classes)");
  }
  EvalResult r;
  r.confidences.reserve(total);
  r.correct.reserve(total);
  r.predictions.reserve(total);
  double loss_sum = 0.0;
  std::size_t hits = 0;
  const std::size_t k = c.num_classes;
  for (std::size_t start = 0; start < total; start += batch_size) {
    const std::size_t n = std::min(batch_size, total - start);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    Tensor<float> batch = gather_images(data, idx);
    Tensor<T> logits;
    if constexpr (std::is_same_v<T, float>) {
      logits = predict(model, batch, mask);
    } else {
      logits = predict(model, batch.template cast<T>(), mask);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const T* z = logits.ptr() + i * k;
      const std::size_t arg = static_cast<std::size_t>(std::max_element(z, z + k) - z);
      const double mx = static_cast<double>(z[arg]);
      double se = 0.0;
      for (std::size_t j = 0; j < k; ++j) se += std::exp(static_cast<double>(z[j]) - mx);
      const std::size_t label = data.labels[start + i];
      loss_sum += mx + std::log(se) - static_cast<double>(z[label]);
      const bool ok = arg == label;
      hits += ok;
      r.confidences.push_back(1.0 / se);
      r.correct.push_back(ok);
      r.predictions.push_back(arg);
    }
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(total);
  r.loss = loss_sum / static_cast<double>(total);
  return r;
}

template EvalResult evaluate(const Model<float>&, const Dataset&, const MaskKind&, std::size_t,
                             std::size_t);
template EvalResult evaluate(const Model<double>&, const Dataset&, const MaskKind&, std::size_t,
                             std::size_t);

}  // namespace illama
