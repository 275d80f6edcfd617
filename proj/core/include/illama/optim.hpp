#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "illama/tensor.hpp"

namespace illama {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// AdamW with decoupled weight decay and bias-corrected moments. Parameters
/// are bound once; decay applies only to those flagged at bind time.
template <Real T>
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  void add_param(Tensor<T>& param, bool decay);

  /// p -= lr * wd * p (flagged only), then the adaptive step from p.grad().
  /// A parameter without a gradient buffer counts as zero gradient.
  void step(double lr);

  std::size_t steps() const noexcept { return t_; }
  const AdamWOptions& options() const noexcept { return options_; }

 private:
  struct Slot {
    Tensor<T>* param;
    bool decay;
    std::vector<T> m;
    std::vector<T> v;
  };
  AdamWOptions options_;
  std::vector<Slot> slots_;
  std::size_t t_ = 0;
};

/// Weight decay applies to matrices and tables (rank >= 2) but not to biases,
/// norm gains or the class token.
bool decays(const std::string& name, const Shape& shape);

}  // namespace illama
