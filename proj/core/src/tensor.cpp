#include "illama/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "illama/errors.hpp"

namespace illama {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <Real T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("zero extent in shape " + shape_to_string(shape_));
  }
}

template <Real T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("zero extent in shape " + shape_to_string(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_to_string(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

template <Real T>
std::span<T> Tensor<T>::grad_mut() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), T{0});
  return grad_;
}

template <Real T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T{0});
}

template <Real T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                     shape_to_string(shape));
  }
  Tensor out(std::move(shape), data_);
  out.requires_grad_ = requires_grad_;
  return out;
}

template <Real T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace illama
