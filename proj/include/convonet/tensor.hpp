#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace convonet {

// Dense row-major n-dimensional array. Float for training, double for
// gradient checking. Every successful operation leaves only finite values
// behind; producing a NaN/Inf throws instead of poisoning downstream math.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  TensorT(std::vector<std::size_t> shape, T fill) : shape_(std::move(shape)) {
    if (shape_.empty()) throw std::invalid_argument("tensor: empty shape");
    std::size_t n = 1;
    for (std::size_t e : shape_) {
      if (e == 0) throw std::invalid_argument("tensor: zero extent in shape");
      n *= e;
    }
    data_.assign(n, fill);
  }

  TensorT(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) throw std::invalid_argument("tensor: empty shape");
    std::size_t n = 1;
    for (std::size_t e : shape_) {
      if (e == 0) throw std::invalid_argument("tensor: zero extent in shape");
      n *= e;
    }
    if (n != data_.size())
      throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::vector<std::size_t> strides() const {
    std::vector<std::size_t> s(shape_.size(), 1);
    for (std::size_t i = shape_.size(); i-- > 1;)
      s[i - 1] = s[i] * shape_[i];
    return s;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  // rank-specific accessors used by the layer kernels
  T& at2(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  T at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  T& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  T at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  T& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  T at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  void fill(T v) { data_.assign(data_.size(), v); }

  // Same flat data, new shape. Element count must be preserved.
  TensorT reshaped(std::vector<std::size_t> new_shape) const {
    TensorT out;
    out.shape_ = std::move(new_shape);
    if (out.shape_.empty())
      throw std::invalid_argument("reshape: empty shape");
    std::size_t n = 1;
    for (std::size_t e : out.shape_) {
      if (e == 0) throw std::invalid_argument("reshape: zero extent");
      n *= e;
    }
    if (n != data_.size())
      throw std::invalid_argument("reshape: element count changed");
    out.data_ = data_;
    return out;
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

template <typename T>
void ensure_finite(const TensorT<T>& t, const char* what) {
  for (T v : t.vec())
    if (!std::isfinite(v))
      throw std::runtime_error(std::string(what) +
                               ": non-finite value produced");
}

template <typename T>
TensorT<T> tensor_new(std::vector<std::size_t> shape, T fill) {
  return TensorT<T>(std::move(shape), fill);
}

enum class ElemOp { add, sub, mul };

template <typename T>
TensorT<T> elementwise(const TensorT<T>& a, const TensorT<T>& b, ElemOp op) {
  if (!a.same_shape(b))
    throw std::invalid_argument("elementwise: shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  TensorT<T> out = a;
  const T* pb = b.data();
  T* po = out.data();
  switch (op) {
    case ElemOp::add:
      for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
      break;
    case ElemOp::sub:
      for (std::size_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
      break;
    case ElemOp::mul:
      for (std::size_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
      break;
  }
  ensure_finite(out, "elementwise");
  return out;
}

// out[j] = sum_i w[i,j] * x[i]; w is u-by-r, x has length u.
template <typename T>
TensorT<T> matvec(const TensorT<T>& w, const TensorT<T>& x) {
  if (w.rank() != 2 || x.rank() != 1)
    throw std::invalid_argument("matvec: expects rank-2 weights and rank-1 input");
  const std::size_t u = w.shape()[0];
  const std::size_t r = w.shape()[1];
  if (x.shape()[0] != u)
    throw std::invalid_argument("matvec: inner extent mismatch " +
                                shape_str(w.shape()) + " vs " +
                                shape_str(x.shape()));
  TensorT<T> out({r}, T(0));
  for (std::size_t i = 0; i < u; ++i) {
    const T xi = x[i];
    const T* row = w.data() + i * r;
    for (std::size_t j = 0; j < r; ++j) out[j] += row[j] * xi;
  }
  ensure_finite(out, "matvec");
  return out;
}

}  // namespace convonet
