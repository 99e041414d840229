#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace layoutlab {

// Dense row-major tensor. Scalar is float for training/inference and double
// for the 64-bit verification mode.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), T{0}) {}

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw std::runtime_error("tensor data does not match shape");
    }
  }

  static Tensor full(std::vector<std::size_t> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2D accessors; most ops treat tensors as [rows, cols].
  std::size_t rows() const { return rank() == 2 ? shape_[0] : size(); }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : 1; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void zero() { std::fill(data_.begin(), data_.end(), T{0}); }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (const std::size_t d : shape) {
      if (d == 0) throw std::runtime_error("zero tensor dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

namespace detail {

template <typename T>
using EigenMatrix =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const EigenMatrix<T>> as_matrix(const Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
Eigen::Map<EigenMatrix<T>> as_matrix(Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

inline void require(bool ok, const char* what) {
  if (!ok) throw std::runtime_error(what);
}

}  // namespace detail

// C = A B. Eigen runs single-threaded here, so summation order is fixed and
// results are reproducible run to run.
template <typename T>
Tensor<T> matmul_nn(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul shape mismatch");
  Tensor<T> c({a.dim(0), b.dim(1)});
  detail::as_matrix(c).noalias() = detail::as_matrix(a) * detail::as_matrix(b);
  return c;
}

// C = A B^T.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
                  "matmul_nt shape mismatch");
  Tensor<T> c({a.dim(0), b.dim(0)});
  detail::as_matrix(c).noalias() =
      detail::as_matrix(a) * detail::as_matrix(b).transpose();
  return c;
}

// C = A^T B.
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0),
                  "matmul_tn shape mismatch");
  Tensor<T> c({a.dim(1), b.dim(1)});
  detail::as_matrix(c).noalias() =
      detail::as_matrix(a).transpose() * detail::as_matrix(b);
  return c;
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& delta) {
  detail::require(acc.same_shape(delta), "add shape mismatch");
  T* a = acc.data();
  const T* d = delta.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += d[i];
}

template <typename T>
void axpy_inplace(Tensor<T>& acc, T alpha, const Tensor<T>& delta) {
  detail::require(acc.same_shape(delta), "axpy shape mismatch");
  T* a = acc.data();
  const T* d = delta.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += alpha * d[i];
}

}  // namespace layoutlab
