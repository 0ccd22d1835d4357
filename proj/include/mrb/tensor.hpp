#pragma once

#include <cstddef>
#include <functional>
#include <new>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mrb/errors.hpp"
#include "mrb/rng.hpp"

namespace mrb {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Eigen picks its vectorised head/tail split from a
/// buffer's address, so a fixed alignment keeps float results bit-identical
/// from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array with an explicit shape.
///
/// Rank-1 tensors are vectors, rank-2 are (rows, cols), and layer inputs may
/// carry a leading batch axis. Instantiated for float (training storage) and
/// double (gradient checks).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : shape_{0} {}
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, const std::vector<T>& data);
  BasicTensor(Shape shape, std::initializer_list<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::vector<T> values() const { return {data_.begin(), data_.end()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  template <typename U>
  friend BasicTensor<U> reshape(BasicTensor<U> x, const Shape& new_shape);

  Shape shape_;
  std::vector<T, AlignedAllocator<T>> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

enum class Activation { linear, sigmoid, tanh, relu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation kind);

/// (m x k) * (k x n) -> (m x n).
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Elementwise activation; shape preserved.
template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind);

/// Softmax along the last axis with max subtraction.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x);

/// Concatenate along the last axis; all leading axes must agree.
template <typename T>
BasicTensor<T> concat_last(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> reshape(BasicTensor<T> x, const Shape& new_shape);

template <typename T>
BasicTensor<T> flatten(BasicTensor<T> x);

/// Glorot/Xavier uniform. For rank r the fans are
/// receptive * shape[r-2] and receptive * shape[r-1], where receptive is the
/// product of the leading r-2 axes (1 for matrices).
template <typename T>
BasicTensor<T> glorot_init(SeededRng& rng, const Shape& shape);

double glorot_bound(const Shape& shape);

template <typename T>
bool all_finite(const BasicTensor<T>& x);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per element.
/// Throws NumericError if f returns a non-finite value.
TensorD finite_diff_grad(const std::function<double(const TensorD&)>& f, const TensorD& x,
                         double eps = 1e-4);

}  // namespace mrb
