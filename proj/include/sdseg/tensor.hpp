#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdseg {

// Dense row-major tensor. Layout conventions used across the project:
//   images / feature maps  [N, C, H, W]
//   label & binary masks   [H, W] or [N, H, W]
//   embedding fields       [N, P, D]  (P = bottleneck pixels)
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int64_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

  TensorT(std::initializer_list<int64_t> shape)
      : TensorT(std::vector<int64_t>(shape)) {}

  static TensorT zeros(std::vector<int64_t> shape) {
    return TensorT(std::move(shape));
  }

  static TensorT full(std::vector<int64_t> shape, T value) {
    TensorT t(std::move(shape));
    t.fill(value);
    return t;
  }

  bool empty() const { return data_.empty(); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }

  int64_t dim(int i) const {
    if (i < 0) i += ndim();
    return shape_.at(static_cast<size_t>(i));
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

  T& at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  const T& at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  T& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  const T& at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  bool operator==(const TensorT& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static size_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw std::invalid_argument("negative tensor dimension");
      n *= d;
    }
    return static_cast<size_t>(n);
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using ByteMask = TensorT<uint8_t>;  // values restricted to {0,1} (binary) or {0,1,2} (labels)

// C = alpha * op(A) * op(B) + beta * C, row-major. Backed by Eigen in gemm.cpp.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha,
          const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c, int64_t ldc);

}  // namespace sdseg
