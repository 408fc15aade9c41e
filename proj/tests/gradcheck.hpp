#pragma once

// Finite-difference oracle used by the gradient tests and the acceptance
// suite. Central differences on the 64-bit kernel instantiations; kept
// independent of the analytic backward paths it checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include "objn/tensor.hpp"

namespace gradcheck {

using objn::TensorD;

// Central-difference gradient of a scalar function of one tensor argument.
inline TensorD fd_gradient(const std::function<double(const TensorD&)>& fn, TensorD x,
                           double eps = 1e-5) {
  TensorD g(x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = fn(x);
    x[i] = orig - eps;
    const double fm = fn(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

inline double max_rel_err(const TensorD& analytic, const TensorD& fd) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = fd[i];
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

// Contraction target: L(out) = sum(out * r). dL/dout = r.
inline double contract(const TensorD& out, const TensorD& r) {
  double s = 0.0;
  for (std::int64_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
  return s;
}

inline TensorD random_tensor(std::vector<std::int64_t> dims, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  TensorD t(std::move(dims));
  objn::fill_uniform(t, rng, lo, hi);
  return t;
}

// All-distinct values with spacing far above the FD step, for max-pool.
inline TensorD distinct_tensor(std::vector<std::int64_t> dims, std::mt19937_64& rng) {
  TensorD t(std::move(dims));
  std::vector<std::int64_t> order(static_cast<std::size_t>(t.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(order[i]);
  return t;
}

// Magnitudes bounded away from zero, for ReLU.
inline TensorD away_from_zero_tensor(std::vector<std::int64_t> dims, std::mt19937_64& rng) {
  TensorD t(std::move(dims));
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.flat()) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return t;
}

}  // namespace gradcheck
