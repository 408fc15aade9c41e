#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "objn/errors.hpp"

namespace objn {

// Dense row-major n-d array. Training state uses the float instantiation;
// gradient checks instantiate the double variant of the same kernels.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
    data_.assign(checked_count(dims_), T(0));
  }

  TensorT(std::vector<std::int64_t> dims, std::vector<T> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (checked_count(dims_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(dims_));
    }
  }

  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::int64_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Same data, new shape; element count must match.
  TensorT reshaped(std::vector<std::int64_t> new_dims) const {
    TensorT out(std::move(new_dims), data_);
    return out;
  }

  bool same_shape(const TensorT& other) const { return dims_ == other.dims_; }

  std::string shape_str() const { return shape_string(dims_); }

  static std::string shape_string(const std::vector<std::int64_t>& d) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "x" : "") << d[i];
    os << "]";
    return os.str();
  }

 private:
  static std::size_t checked_count(const std::vector<std::int64_t>& d) {
    std::int64_t n = 1;
    for (auto v : d) {
      if (v <= 0) throw ShapeError("tensor dims must be positive, got " + shape_string(d));
      n *= v;
    }
    return static_cast<std::size_t>(n);
  }

  std::vector<std::int64_t> dims_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (auto v : t.flat())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
void fill_normal(TensorT<T>& t, std::mt19937_64& rng, double stddev, double mean = 0.0) {
  std::normal_distribution<double> d(mean, stddev);
  for (auto& v : t.flat()) v = static_cast<T>(d(rng));
}

template <typename T>
void fill_uniform(TensorT<T>& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.flat()) v = static_cast<T>(d(rng));
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename Dst, typename Src>
TensorT<Dst> cast_tensor(const TensorT<Src>& t) {
  TensorT<Dst> out(t.dims());
  for (std::int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<Dst>(t[i]);
  return out;
}

}  // namespace objn
