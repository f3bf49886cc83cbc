#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace endocss {

/// Dense row-major tensor. Batched image data uses NHWC layout throughout:
/// images are {B,H,W,3}, logits and probabilities {B,H,W,C}, masks {B,H,W}.
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(std::vector<long> shape)
      : shape_(std::move(shape)),
        data_(static_cast<std::size_t>(count(shape_)), T{}) {}
  BasicTensor(std::vector<long> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    assert(static_cast<long>(data_.size()) == count(shape_));
  }

  static BasicTensor zeros(std::vector<long> shape) {
    return BasicTensor(std::move(shape));
  }
  static BasicTensor full(std::vector<long> shape, T value) {
    BasicTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  long dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<long>& shape() const { return shape_; }
  long numel() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

  T& operator()(long i, long j) {
    assert(rank() == 2);
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  const T& operator()(long i, long j) const {
    assert(rank() == 2);
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  T& operator()(long i, long j, long k) {
    assert(rank() == 3);
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  const T& operator()(long i, long j, long k) const {
    assert(rank() == 3);
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  T& operator()(long i, long j, long k, long l) {
    assert(rank() == 4);
    return data_[static_cast<std::size_t>(
        ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  const T& operator()(long i, long j, long k, long l) const {
    assert(rank() == 4);
    return data_[static_cast<std::size_t>(
        ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const BasicTensor& other) const {
    return shape_ == other.shape_;
  }

  static long count(const std::vector<long>& shape) {
    long n = 1;
    for (const long d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<long> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;
using TensorI = BasicTensor<std::int32_t>;

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  assert(a.same_shape(b));
  BasicTensor<T> out = a;
  for (long i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& in) {
  BasicTensor<To> out(in.shape());
  for (long i = 0; i < in.numel(); ++i) out[i] = static_cast<To>(in[i]);
  return out;
}

}  // namespace endocss
