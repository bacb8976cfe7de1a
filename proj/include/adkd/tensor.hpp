#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "adkd/errors.hpp"

namespace adkd {

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

// Dense row-major tensor of rank 0..4. Rank 0 holds a single scalar.
// float is the working precision for training and inference; double is used
// by the verification paths (finite differences, reference oracles).
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    validate(shape_);
    data_.assign(count(shape_), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate(shape_);
    if (data_.size() != count(shape_)) {
      throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(T v) {
    Tensor t{std::vector<int>{}};
    t.data_[0] = v;
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }

  static void validate(const std::vector<int>& shape) {
    if (shape.size() > 4) {
      throw DimensionError("rank " + std::to_string(shape.size()) +
                           " exceeds the supported maximum of 4");
    }
    for (int d : shape) {
      if (d < 1) throw DimensionError("tensor dims must be >= 1, got " + shape_str(shape));
    }
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

// Normalized view of a feature-map shape: rank 3 reads as an unbatched
// (C,H,W) map, rank 4 as (N,C,H,W). Output ranks mirror input ranks.
struct MapDims {
  int n, c, h, w;
  bool batched;
};

template <typename T>
inline MapDims map_dims(const Tensor<T>& t, const char* what) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  throw DimensionError(std::string(what) + ": expected a rank-3 (C,H,W) or rank-4 (N,C,H,W) tensor, got " +
                       shape_str(t.shape()));
}

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace adkd
