#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vmsgan/error.hpp"

namespace vmsgan {

/// NCHW extent. Dense activations use (n, features, 1, 1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] std::size_t sample_size() const {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(n) * sample_size(); }
  [[nodiscard]] Shape with_batch(int batch) const { return {batch, c, h, w}; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense NCHW tensor with value semantics.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw UsageError("tensor data size does not match shape " + shape_.str());
    }
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int batch() const { return shape_.n; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] T* data() { return data_.data(); }
  [[nodiscard]] const T* data() const { return data_.data(); }
  [[nodiscard]] std::vector<T>& values() { return data_; }
  [[nodiscard]] const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  [[nodiscard]] std::span<T> sample(int n) {
    return {data_.data() + static_cast<std::size_t>(n) * shape_.sample_size(), shape_.sample_size()};
  }
  [[nodiscard]] std::span<const T> sample(int n) const {
    return {data_.data() + static_cast<std::size_t>(n) * shape_.sample_size(), shape_.sample_size()};
  }

  /// Same data, new extent of equal size.
  void reshape(Shape shape) {
    if (shape.size() != data_.size()) {
      throw UsageError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    shape_ = shape;
  }

 private:
  [[nodiscard]] std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Rows [first, first + count) of a batch.
template <class T>
Tensor<T> slice_batch(const Tensor<T>& t, int first, int count) {
  const std::size_t stride = t.shape().sample_size();
  std::vector<T> out(t.data() + first * stride, t.data() + (first + count) * stride);
  return Tensor<T>(t.shape().with_batch(count), std::move(out));
}

}  // namespace vmsgan
