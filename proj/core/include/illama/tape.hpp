#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "illama/tensor.hpp"

namespace illama {

template <Real T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives and has not been cleared.
template <Real T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  bool needs_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
/// Leaves created with leaf() refer to caller-owned tensors which must outlive
/// the tape; backward() accumulates into their gradient buffers when they
/// require grad. A tape belongs to one thread.
template <Real T>
class Tape {
 public:
  /// Receives the finished gradient of the node's output.
  using Backward = std::function<void(std::span<const T>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T>& tensor);
  Var<T> constant(Tensor<T> tensor);
  /// Appends an op output. The backward rule is dropped when no input needs
  /// a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward);

  const Tensor<T>& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient accumulator of a node; zero-initialised on first access.
  /// Intended for backward rules adding into their inputs.
  std::span<T> grad_of(const Var<T>& v);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Leaf tensors accumulate, so
  /// repeated calls add up until Tensor::zero_grad().
  void backward(const Var<T>& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    std::vector<T> grad;
    bool needs_grad = false;
    Backward backward;
  };

  std::deque<Node> nodes_;
};

template <Real T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <Real T>
bool Var<T>::needs_grad() const {
  return tape_->needs_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace illama
