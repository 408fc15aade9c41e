#pragma once

// Serial reference implementations of the layer kernels. Plain nested loops,
// no threading, no im2col. The production kernels in kernels.hpp are checked
// against these in the test suite and in the benchmark tool.

#include <algorithm>
#include <cstdint>

#include "objn/kernel_types.hpp"
#include "objn/tensor.hpp"

namespace objn::ref {

using std::int64_t;

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weights,
                          const TensorT<T>& bias, int stride, int pad) {
  detail::check_conv_args(input, weights, bias, stride, pad);
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t filters = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (w + 2 * pad - kw) / stride + 1;
  TensorT<T> out({n_batch, filters, oh, ow});
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t f = 0; f < filters; ++f)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          T acc = bias[f];
          for (int64_t c = 0; c < channels; ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = y * stride - pad + ky;
                const int64_t ix = x * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += input[((n * channels + c) * h + iy) * w + ix] *
                       weights[((f * channels + c) * kh + ky) * kw + kx];
              }
          out[((n * filters + f) * oh + y) * ow + x] = acc;
        }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weights,
                               int stride, int pad, const TensorT<T>& d_out) {
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t filters = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const int64_t oh = d_out.dim(2), ow = d_out.dim(3);
  Conv2dGrads<T> g{TensorT<T>(input.dims()), TensorT<T>(weights.dims()),
                   TensorT<T>({filters})};
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t f = 0; f < filters; ++f)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          const T go = d_out[((n * filters + f) * oh + y) * ow + x];
          g.d_bias[f] += go;
          for (int64_t c = 0; c < channels; ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = y * stride - pad + ky;
                const int64_t ix = x * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                const int64_t ii = ((n * channels + c) * h + iy) * w + ix;
                g.d_weights[((f * channels + c) * kh + ky) * kw + kx] += go * input[ii];
                g.d_input[ii] += go * weights[((f * channels + c) * kh + ky) * kw + kx];
              }
        }
  return g;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
  TensorT<T> out(input.dims());
  for (int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& d_out) {
  TensorT<T> g(input.dims());
  for (int64_t i = 0; i < input.size(); ++i) g[i] = input[i] > T(0) ? d_out[i] : T(0);
  return g;
}

template <typename T>
TensorT<T> lrn_forward(const TensorT<T>& input, const LrnParams& p) {
  detail::check_lrn_args(input, p);
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t half = (p.n - 1) / 2;
  TensorT<T> out(input.dims());
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t c = 0; c < channels; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          T sq = T(0);
          const int64_t lo = std::max<int64_t>(0, c - half);
          const int64_t hi = std::min<int64_t>(channels - 1, c + half);
          for (int64_t j = lo; j <= hi; ++j) {
            const T v = input[((n * channels + j) * h + y) * w + x];
            sq += v * v;
          }
          const T den = static_cast<T>(std::pow(static_cast<double>(p.k) + p.alpha * static_cast<double>(sq),
                                                p.beta));
          out[((n * channels + c) * h + y) * w + x] = input[((n * channels + c) * h + y) * w + x] / den;
        }
  return out;
}

template <typename T>
TensorT<T> lrn_backward(const TensorT<T>& input, const LrnParams& p, const TensorT<T>& d_out) {
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t half = (p.n - 1) / 2;
  TensorT<T> g(input.dims());
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        // den[c]^-beta and the shared gy*x*den^-(beta+1) terms for this column.
        std::vector<double> den(channels), coef(channels);
        for (int64_t c = 0; c < channels; ++c) {
          double sq = 0.0;
          const int64_t lo = std::max<int64_t>(0, c - half);
          const int64_t hi = std::min<int64_t>(channels - 1, c + half);
          for (int64_t j = lo; j <= hi; ++j) {
            const double v = input[((n * channels + j) * h + y) * w + x];
            sq += v * v;
          }
          den[c] = p.k + p.alpha * sq;
          const double gy = d_out[((n * channels + c) * h + y) * w + x];
          const double xc = input[((n * channels + c) * h + y) * w + x];
          coef[c] = gy * xc * std::pow(den[c], -(p.beta + 1.0));
        }
        for (int64_t i = 0; i < channels; ++i) {
          const double gy = d_out[((n * channels + i) * h + y) * w + x];
          double acc = gy * std::pow(den[i], -p.beta);
          const int64_t lo = std::max<int64_t>(0, i - half);
          const int64_t hi = std::min<int64_t>(channels - 1, i + half);
          double cross = 0.0;
          for (int64_t c = lo; c <= hi; ++c) cross += coef[c];
          acc -= 2.0 * p.alpha * p.beta * static_cast<double>(input[((n * channels + i) * h + y) * w + x]) * cross;
          g[((n * channels + i) * h + y) * w + x] = static_cast<T>(acc);
        }
      }
  return g;
}

template <typename T>
TensorT<T> maxpool_forward(const TensorT<T>& input, int window, int stride) {
  detail::check_pool_args(input, window, stride);
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t oh = (h - window) / stride + 1;
  const int64_t ow = (w - window) / stride + 1;
  TensorT<T> out({n_batch, channels, oh, ow});
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t c = 0; c < channels; ++c)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          T best = input[((n * channels + c) * h + y * stride) * w + x * stride];
          for (int64_t ky = 0; ky < window; ++ky)
            for (int64_t kx = 0; kx < window; ++kx) {
              const T v = input[((n * channels + c) * h + y * stride + ky) * w + x * stride + kx];
              if (v > best) best = v;
            }
          out[((n * channels + c) * oh + y) * ow + x] = best;
        }
  return out;
}

template <typename T>
TensorT<T> maxpool_backward(const TensorT<T>& input, int window, int stride,
                            const TensorT<T>& d_out) {
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t oh = d_out.dim(2), ow = d_out.dim(3);
  TensorT<T> g(input.dims());
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t c = 0; c < channels; ++c)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          // first row-major argmax of the window
          int64_t by = y * stride, bx = x * stride;
          T best = input[((n * channels + c) * h + by) * w + bx];
          for (int64_t ky = 0; ky < window; ++ky)
            for (int64_t kx = 0; kx < window; ++kx) {
              const T v = input[((n * channels + c) * h + y * stride + ky) * w + x * stride + kx];
              if (v > best) {
                best = v;
                by = y * stride + ky;
                bx = x * stride + kx;
              }
            }
          g[((n * channels + c) * h + by) * w + bx] += d_out[((n * channels + c) * oh + y) * ow + x];
        }
  return g;
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& bias) {
  detail::check_dense_args(input, weights, bias);
  const int64_t n_batch = input.dim(0), d = input.dim(1), m = weights.dim(1);
  TensorT<T> out({n_batch, m});
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t j = 0; j < m; ++j) {
      T acc = bias[j];
      for (int64_t k = 0; k < d; ++k) acc += input[n * d + k] * weights[k * m + j];
      out[n * m + j] = acc;
    }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const TensorT<T>& d_out) {
  const int64_t n_batch = input.dim(0), d = input.dim(1), m = weights.dim(1);
  DenseGrads<T> g{TensorT<T>(input.dims()), TensorT<T>(weights.dims()), TensorT<T>({m})};
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t j = 0; j < m; ++j) {
      const T go = d_out[n * m + j];
      g.d_bias[j] += go;
      for (int64_t k = 0; k < d; ++k) {
        g.d_weights[k * m + j] += input[n * d + k] * go;
        g.d_input[n * d + k] += weights[k * m + j] * go;
      }
    }
  return g;
}

}  // namespace objn::ref
