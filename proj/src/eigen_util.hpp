#pragma once

// Eigen views over tensor storage. Internal to the library.

#include <Eigen/Dense>

#include "mrb/tensor.hpp"

namespace mrb::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <typename T>
MatMap<T> as_matrix(BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
ConstMatMap<T> as_matrix(const BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

/// Rank-2 view of a tensor: all leading axes collapsed into rows.
template <typename T>
MatMap<T> as_matrix(BasicTensor<T>& t) {
  const std::size_t cols = t.shape().back();
  return as_matrix(t, cols == 0 ? 0 : t.size() / cols, cols);
}

template <typename T>
ConstMatMap<T> as_matrix(const BasicTensor<T>& t) {
  const std::size_t cols = t.shape().back();
  return as_matrix(t, cols == 0 ? 0 : t.size() / cols, cols);
}

template <typename T>
VecMap<T> as_row(BasicTensor<T>& t) {
  return VecMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size()));
}

template <typename T>
ConstVecMap<T> as_row(const BasicTensor<T>& t) {
  return ConstVecMap<T>(t.ptr(), static_cast<Eigen::Index>(t.size()));
}

}  // namespace mrb::detail
