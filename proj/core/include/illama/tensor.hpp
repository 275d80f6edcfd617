#pragma once

#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace illama {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Additive-mask sentinel for "not visible". Softmax maps it to exactly 0.
template <Real T>
inline constexpr T kMasked = -std::numeric_limits<T>::infinity();

/// Dense row-major array with an optional gradient buffer.
///
/// Copies are deep. The gradient buffer, when present, always has the same
/// element count as the data.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  /// Row-major 2-D access; the tensor must be rank 2.
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<const T> grad() const noexcept { return grad_; }
  /// Gradient buffer, allocated as zeros on first use.
  std::span<T> grad_mut();
  void zero_grad();

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  template <Real U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out[i] = static_cast<U>(data_[i]);
    }
    out.set_requires_grad(requires_grad_);
    return out;
  }

  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<T> data_;
  bool requires_grad_ = false;
  std::vector<T> grad_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace illama
