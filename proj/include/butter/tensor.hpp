#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "butter/rng.hpp"

namespace butter {

inline std::string dims_to_string(const std::vector<int>& dims) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ",";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

inline std::int64_t checked_volume(const std::vector<int>& dims) {
  std::int64_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("tensor: nonpositive extent in " + dims_to_string(dims));
    n *= d;
  }
  return n;
}

// Dense row-major tensor over float or double. Values are written during
// construction and treated as immutable by the ops layer; every op returns
// a fresh tensor.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> dims)
      : dims_(std::move(dims)), data_(static_cast<std::size_t>(checked_volume(dims_)), T(0)) {}

  Tensor(std::vector<int> dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != checked_volume(dims_))
      throw std::invalid_argument("tensor: payload size does not match " + dims_to_string(dims_));
  }

  static Tensor full(std::vector<int> dims, T v) {
    Tensor t(std::move(dims));
    for (auto& x : t.data_) x = v;
    return t;
  }

  int ndim() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& dims() const { return dims_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // [C,H,W] indexing
  T& at(int c, int i, int j) { return data_[flat3(c, i, j)]; }
  const T& at(int c, int i, int j) const { return data_[flat3(c, i, j)]; }

  // [O,C,a,b] indexing
  T& at(int o, int c, int a, int b) { return data_[flat4(o, c, a, b)]; }
  const T& at(int o, int c, int a, int b) const { return data_[flat4(o, c, a, b)]; }

  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

 private:
  std::size_t flat3(int c, int i, int j) const {
    return static_cast<std::size_t>((static_cast<std::int64_t>(c) * dims_[1] + i) * dims_[2] + j);
  }
  std::size_t flat4(int o, int c, int a, int b) const {
    return static_cast<std::size_t>(
        ((static_cast<std::int64_t>(o) * dims_[1] + c) * dims_[2] + a) * dims_[3] + b);
  }

  std::vector<int> dims_;
  std::vector<T> data_;
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (std::int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(static_cast<double>(t[i]))) return false;
  return true;
}

template <typename T>
Tensor<T> random_tensor(std::vector<int> dims, SplitMix64& rng, double lo, double hi) {
  Tensor<T> t(std::move(dims));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_dims(b))
    throw std::invalid_argument("max_abs_diff: dims " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
  double worst = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    double d = std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    if (d > worst) worst = d;
  }
  return worst;
}

}  // namespace butter
