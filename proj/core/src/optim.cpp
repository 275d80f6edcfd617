#include "illama/optim.hpp"

#include <cmath>

#include "illama/errors.hpp"

namespace illama {

bool decays(const std::string& name, const Shape& shape) {
  return shape.size() >= 2 && name != "cls_token";
}

template <Real T>
void AdamW<T>::add_param(Tensor<T>& param, bool decay) {
  slots_.push_back({&param, decay, std::vector<T>(param.numel(), T{0}),
                    std::vector<T>(param.numel(), T{0})});
}

template <Real T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double shrink = 1.0 - lr * options_.weight_decay;
  for (Slot& s : slots_) {
    auto p = s.param->data();
    const bool has = s.param->has_grad();
    auto g = s.param->grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      double pi = static_cast<double>(p[i]);
      if (s.decay) pi *= shrink;
      const double gi = has ? static_cast<double>(g[i]) : 0.0;
      const double m = b1 * static_cast<double>(s.m[i]) + (1.0 - b1) * gi;
      const double v = b2 * static_cast<double>(s.v[i]) + (1.0 - b2) * gi * gi;
      s.m[i] = static_cast<T>(m);
      s.v[i] = static_cast<T>(v);
      pi -= lr * (m / c1) / (std::sqrt(v / c2) + options_.eps);
      p[i] = static_cast<T>(pi);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace illama
