#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmjsd {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor. Rank 0 is a scalar holding one element.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
      throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                       to_string(shape_));
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return Tensor({rows, cols}, std::vector<T>(values));
  }
  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }
  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T{1};
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rows() const { return rank() == 2 ? shape_[0] : throw ShapeError("rows() on non-matrix"); }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : throw ShapeError("cols() on non-matrix"); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  T item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * shape_[1], shape_[1]}; }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != data_.size())
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    return Tensor(std::move(shape), data_);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Rows [begin, end) of a matrix.
template <class T>
Tensor<T> take_rows(const Tensor<T>& m, std::size_t begin, std::size_t end) {
  const std::size_t cols = m.cols();
  std::vector<T> out(m.data() + begin * cols, m.data() + end * cols);
  return Tensor<T>({end - begin, cols}, std::move(out));
}

/// Gathers the listed rows of a matrix, in order.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& m, std::span<const std::size_t> rows) {
  const std::size_t cols = m.cols();
  Tensor<T> out({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(m.data() + rows[i] * cols, cols, out.data() + i * cols);
  return out;
}

}  // namespace mmjsd
