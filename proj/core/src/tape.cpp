#include "illama/tape.hpp"

#include "illama/errors.hpp"

namespace illama {

template <Real T>
Var<T> Tape<T>::leaf(Tensor<T>& tensor) {
  Node& n = nodes_.emplace_back();
  n.external = &tensor;
  n.needs_grad = tensor.requires_grad();
  return Var<T>(this, nodes_.size() - 1);
}

template <Real T>
Var<T> Tape<T>::constant(Tensor<T> tensor) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(tensor);
  return Var<T>(this, nodes_.size() - 1);
}

template <Real T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                       Backward backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw ContractError("operands live on different tapes");
    needs = needs || nodes_[in.id()].needs_grad;
  }
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var<T>(this, nodes_.size() - 1);
}

template <Real T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

template <Real T>
std::span<T> Tape<T>::grad_of(const Var<T>& v) {
  Node& n = nodes_[v.id()];
  const std::size_t count = value(v.id()).numel();
  if (n.grad.size() != count) n.grad.assign(count, T{0});
  return n.grad;
}

template <Real T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.numel() != 1) {
    throw RankError("backward() needs a scalar loss, got shape " +
                    shape_to_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id()].needs_grad) return;
  grad_of(loss)[0] = T{1};

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.external) {
      if (n.external->requires_grad()) {
        auto dst = n.external->grad_mut();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad[j];
      }
      n.grad.clear();
      continue;
    }
    if (n.backward) n.backward(n.grad);
    // Every consumer has a larger id, so this gradient is final and no longer
    // needed once propagated.
    std::vector<T>().swap(n.grad);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace illama
