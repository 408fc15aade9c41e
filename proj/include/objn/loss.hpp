#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "objn/tensor.hpp"

namespace objn {

using std::int64_t;

// Row-wise softmax with shifted-exponent stability and double accumulation.
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: logits must be NxK, got " + logits.shape_str());
  const int64_t n_rows = logits.dim(0), k = logits.dim(1);
  TensorT<T> probs(logits.dims());
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < n_rows; ++n) {
    const T* z = logits.data() + n * k;
    T* p = probs.data() + n * k;
    double m = z[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(z[j]));
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(z[j]) - m);
    for (int64_t j = 0; j < k; ++j)
      p[j] = static_cast<T>(std::exp(static_cast<double>(z[j]) - m) / s);
  }
  return probs;
}

template <typename T>
struct SoftXentResult {
  double loss;
  TensorT<T> d_logits;
};

// Mean cross-entropy of softmax(logits) against per-row target distributions.
// Each target row must be elementwise >= 0 and sum to 1 within 1e-6.
// d_logits = (softmax(logits) - target) / N.
template <typename T>
SoftXentResult<T> softmax_xent_soft(const TensorT<T>& logits, const TensorT<T>& targets) {
  if (logits.rank() != 2 || !logits.same_shape(targets))
    throw ShapeError("softmax_xent_soft: logits " + logits.shape_str() + " vs targets " +
                     targets.shape_str());
  const int64_t n_rows = logits.dim(0), k = logits.dim(1);
  for (int64_t n = 0; n < n_rows; ++n) {
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      const double t = targets[n * k + j];
      if (t < 0.0) throw ShapeError("softmax_xent_soft: target row " + std::to_string(n) + " has a negative entry");
      s += t;
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw ShapeError("softmax_xent_soft: target row " + std::to_string(n) + " sums to " +
                       std::to_string(s) + ", not a distribution");
  }

  SoftXentResult<T> r{0.0, TensorT<T>(logits.dims())};
  std::vector<double> row_loss(static_cast<std::size_t>(n_rows));
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < n_rows; ++n) {
    const T* z = logits.data() + n * k;
    const T* t = targets.data() + n * k;
    T* g = r.d_logits.data() + n * k;
    double m = z[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(z[j]));
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(z[j]) - m);
    const double log_z = std::log(s);
    double acc = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      const double logp = static_cast<double>(z[j]) - m - log_z;
      acc -= static_cast<double>(t[j]) * logp;
      g[j] = static_cast<T>((std::exp(logp) - static_cast<double>(t[j])) / static_cast<double>(n_rows));
    }
    row_loss[static_cast<std::size_t>(n)] = acc;
  }
  double total = 0.0;
  for (auto v : row_loss) total += v;
  r.loss = total / static_cast<double>(n_rows);
  return r;
}

}  // namespace objn
