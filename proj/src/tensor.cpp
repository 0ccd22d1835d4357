#include "mrb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "eigen_util.hpp"

namespace mrb {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one axis");
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, const std::vector<T>& data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one axis");
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
  }
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::initializer_list<T> data)
    : BasicTensor(std::move(shape), std::vector<T>(data)) {}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape_));
  }
  return shape_[axis];
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

Activation parse_activation(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::linear: return "linear";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "?";
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  BasicTensor<T> out({a.dim(0), b.dim(1)});
  if (out.empty()) return out;
  if (a.dim(1) == 0) return out;
  detail::as_matrix(out).noalias() = detail::as_matrix(a) * detail::as_matrix(b);
  return out;
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind) {
  BasicTensor<T> out = x;
  auto d = out.data();
  switch (kind) {
    case Activation::linear: break;
    case Activation::sigmoid:
      for (auto& v : d) v = T(1) / (T(1) + std::exp(-v));
      break;
    case Activation::tanh:
      for (auto& v : d) v = std::tanh(v);
      break;
    case Activation::relu:
      for (auto& v : d) v = v > T(0) ? v : T(0);
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  const std::size_t m = x.shape().back();
  if (m == 0) throw DimensionError("softmax: last axis must be non-empty");
  BasicTensor<T> out = x;
  auto d = out.data();
  for (std::size_t row = 0; row < d.size(); row += m) {
    auto seg = d.subspan(row, m);
    const T peak = *std::max_element(seg.begin(), seg.end());
    T total = 0;
    for (auto& v : seg) {
      v = std::exp(v - peak);
      total += v;
    }
    for (auto& v : seg) v /= total;
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_last(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw DimensionError("concat_last: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t na = a.shape().back();
  const std::size_t nb = b.shape().back();
  Shape shape = a.shape();
  shape.back() = na + nb;
  BasicTensor<T> out(shape);
  const std::size_t rows = shape_size(shape) / std::max<std::size_t>(na + nb, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.ptr() + r * na, na, out.ptr() + r * (na + nb));
    std::copy_n(b.ptr() + r * nb, nb, out.ptr() + r * (na + nb) + na);
  }
  return out;
}

template <typename T>
BasicTensor<T> reshape(BasicTensor<T> x, const Shape& new_shape) {
  if (new_shape.empty() || shape_size(new_shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
  }
  x.shape_ = new_shape;
  return x;
}

template <typename T>
BasicTensor<T> flatten(BasicTensor<T> x) {
  const std::size_t n = x.size();
  return reshape(std::move(x), Shape{n});
}

double glorot_bound(const Shape& shape) {
  if (shape.size() < 2) throw DimensionError("glorot_init: weight shape needs >= 2 axes");
  std::size_t receptive = 1;
  for (std::size_t i = 0; i + 2 < shape.size(); ++i) receptive *= shape[i];
  const double fan_in = static_cast<double>(receptive * shape[shape.size() - 2]);
  const double fan_out = static_cast<double>(receptive * shape.back());
  return std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
BasicTensor<T> glorot_init(SeededRng& rng, const Shape& shape) {
  const double bound = glorot_bound(shape);
  BasicTensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return out;
}

template <typename T>
bool all_finite(const BasicTensor<T>& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](T v) { return std::isfinite(v); });
}

TensorD finite_diff_grad(const std::function<double(const TensorD&)>& f, const TensorD& x,
                         double eps) {
  if (!(eps > 0)) throw NumericError("finite_diff_grad: eps must be positive");
  TensorD probe = x;
  TensorD grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: objective is not finite at element " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

#define MRB_INSTANTIATE(T)                                                        \
  template class BasicTensor<T>;                                                  \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);   \
  template BasicTensor<T> activation(const BasicTensor<T>&, Activation);          \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                         \
  template BasicTensor<T> concat_last(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> reshape(BasicTensor<T>, const Shape&);                  \
  template BasicTensor<T> flatten(BasicTensor<T>);                                \
  template BasicTensor<T> glorot_init(SeededRng&, const Shape&);                  \
  template bool all_finite(const BasicTensor<T>&);

MRB_INSTANTIATE(float)
MRB_INSTANTIATE(double)

#undef MRB_INSTANTIATE

}  // namespace mrb
