#pragma once

// Production layer kernels. Convolution and dense layers run as im2col +
// GEMM with the j-inner loop form, parallelized with OpenMP over independent
// output slices. Every output element accumulates its reduction serially in
// ascending index order, so results are bitwise reproducible run to run for
// any thread count. Serial reference implementations live in kernels_ref.hpp.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "objn/kernel_types.hpp"
#include "objn/tensor.hpp"

namespace objn::kernels {

using std::int64_t;

namespace detail {

// C[M,N] += A[M,K] * B[K,N], row-major. k ascending per output element.
template <typename T>
void gemm_add_serial(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      const T* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <typename T>
void gemm_add_parallel(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      const T* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* a, int64_t rows, int64_t cols) {
  std::vector<T> t(static_cast<std::size_t>(rows * cols));
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

// Patch matrix P[(c,ky,kx), (y,x)] for one sample, zero-padded.
template <typename T>
void im2col(const T* in, int64_t channels, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int stride, int pad, int64_t oh, int64_t ow, T* p) {
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        T* prow = p + ((c * kh + ky) * kw + kx) * (oh * ow);
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t iy = y * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            for (int64_t x = 0; x < ow; ++x) prow[y * ow + x] = T(0);
            continue;
          }
          const T* irow = in + (c * h + iy) * w;
          for (int64_t x = 0; x < ow; ++x) {
            const int64_t ix = x * stride - pad + kx;
            prow[y * ow + x] = (ix < 0 || ix >= w) ? T(0) : irow[ix];
          }
        }
      }
}

// Scatter-add of the patch-matrix gradient back onto the input gradient.
// (k,l) ascending, so the accumulation order is fixed.
template <typename T>
void col2im_add(const T* dp, int64_t channels, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int stride, int pad, int64_t oh, int64_t ow, T* din) {
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        const T* prow = dp + ((c * kh + ky) * kw + kx) * (oh * ow);
        for (int64_t y = 0; y < oh; ++y) {
          const int64_t iy = y * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* irow = din + (c * h + iy) * w;
          for (int64_t x = 0; x < ow; ++x) {
            const int64_t ix = x * stride - pad + kx;
            if (ix >= 0 && ix < w) irow[ix] += prow[y * ow + x];
          }
        }
      }
}

}  // namespace detail

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weights,
                          const TensorT<T>& bias, int stride, int pad) {
  objn::detail::check_conv_args(input, weights, bias, stride, pad);
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t filters = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (w + 2 * pad - kw) / stride + 1;
  const int64_t kp = channels * kh * kw, l = oh * ow;
  TensorT<T> out({n_batch, filters, oh, ow});
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < n_batch; ++n) {
    std::vector<T> patch(static_cast<std::size_t>(kp * l));
    detail::im2col(input.data() + n * channels * h * w, channels, h, w, kh, kw, stride, pad, oh,
                   ow, patch.data());
    T* on = out.data() + n * filters * l;
    for (int64_t f = 0; f < filters; ++f)
      for (int64_t j = 0; j < l; ++j) on[f * l + j] = bias[f];
    detail::gemm_add_serial(filters, kp, l, weights.data(), patch.data(), on);
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weights, int stride,
                               int pad, const TensorT<T>& d_out) {
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t filters = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  if (d_out.rank() != 4 || d_out.dim(0) != n_batch || d_out.dim(1) != filters)
    throw ShapeError("conv2d backward: d_out shape " + d_out.shape_str() + " does not match");
  const int64_t oh = d_out.dim(2), ow = d_out.dim(3);
  const int64_t kp = channels * kh * kw, l = oh * ow;
  Conv2dGrads<T> g{TensorT<T>(input.dims()), TensorT<T>(weights.dims()), TensorT<T>({filters})};

  // d_input: per sample, dP = W^T * dOut_n, then scatter back.
  const auto wt = detail::transposed(weights.data(), filters, kp);
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < n_batch; ++n) {
    std::vector<T> dpatch(static_cast<std::size_t>(kp * l), T(0));
    detail::gemm_add_serial(kp, filters, l, wt.data(), d_out.data() + n * filters * l,
                            dpatch.data());
    detail::col2im_add(dpatch.data(), channels, h, w, kh, kw, stride, pad, oh, ow,
                       g.d_input.data() + n * channels * h * w);
  }

  // d_weights and d_bias accumulate across samples in ascending n order.
  std::vector<T> patch(static_cast<std::size_t>(kp * l));
  for (int64_t n = 0; n < n_batch; ++n) {
    detail::im2col(input.data() + n * channels * h * w, channels, h, w, kh, kw, stride, pad, oh,
                   ow, patch.data());
    const auto pt = detail::transposed(patch.data(), kp, l);
    detail::gemm_add_parallel(filters, l, kp, d_out.data() + n * filters * l, pt.data(),
                              g.d_weights.data());
    const T* gn = d_out.data() + n * filters * l;
    for (int64_t f = 0; f < filters; ++f) {
      T acc = T(0);
      for (int64_t j = 0; j < l; ++j) acc += gn[f * l + j];
      g.d_bias[f] += acc;
    }
  }
  return g;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
  TensorT<T> out(input.dims());
  const int64_t n = input.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& d_out) {
  if (!input.same_shape(d_out))
    throw ShapeError("relu backward: shape mismatch " + input.shape_str() + " vs " + d_out.shape_str());
  TensorT<T> g(input.dims());
  const int64_t n = input.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) g[i] = input[i] > T(0) ? d_out[i] : T(0);
  return g;
}

template <typename T>
TensorT<T> lrn_forward(const TensorT<T>& input, const LrnParams& p) {
  objn::detail::check_lrn_args(input, p);
  const int64_t n_batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
  const int64_t half = (p.n - 1) / 2;
  TensorT<T> out(input.dims());
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < n_batch; ++n) {
    const T* in = input.data() + n * channels * plane;
    T* on = out.data() + n * channels * plane;
    std::vector<double> sq(static_cast<std::size_t>(plane));
    for (int64_t c = 0; c < channels; ++c) {
      std::fill(sq.begin(), sq.end(), 0.0);
      const int64_t lo = std::max<int64_t>(0, c - half);
      const int64_t hi = std::min<int64_t>(channels - 1, c + half);
      for (int64_t j = lo; j <= hi; ++j) {
        const T* jp = in + j * plane;
        for (int64_t i = 0; i < plane; ++i) sq[i] += static_cast<double>(jp[i]) * jp[i];
      }
      const T* cp = in + c * plane;
      T* op = on + c * plane;
      for (int64_t i = 0; i < plane; ++i)
        op[i] = static_cast<T>(cp[i] / std::pow(p.k + p.alpha * sq[i], p.beta));
    }
  }
  return out;
}

template <typename T>
TensorT<T> lrn_backward(const TensorT<T>& input, const LrnParams& p, const TensorT<T>& d_out) {
  if (!input.same_shape(d_out))
    throw ShapeError("lrn backward: shape mismatch " + input.shape_str() + " vs " + d_out.shape_str());
  const int64_t n_batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
  const int64_t half = (p.n - 1) / 2;
  TensorT<T> g(input.dims());
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < n_batch; ++n) {
    const T* in = input.data() + n * channels * plane;
    const T* go = d_out.data() + n * channels * plane;
    T* gn = g.data() + n * channels * plane;
    // denb[c] = den^-beta, coef[c] = gy*x*den^-(beta+1), per plane position
    std::vector<double> denb(static_cast<std::size_t>(channels * plane));
    std::vector<double> coef(static_cast<std::size_t>(channels * plane));
    std::vector<double> sq(static_cast<std::size_t>(plane));
    for (int64_t c = 0; c < channels; ++c) {
      std::fill(sq.begin(), sq.end(), 0.0);
      const int64_t lo = std::max<int64_t>(0, c - half);
      const int64_t hi = std::min<int64_t>(channels - 1, c + half);
      for (int64_t j = lo; j <= hi; ++j) {
        const T* jp = in + j * plane;
        for (int64_t i = 0; i < plane; ++i) sq[i] += static_cast<double>(jp[i]) * jp[i];
      }
      for (int64_t i = 0; i < plane; ++i) {
        const double den = p.k + p.alpha * sq[i];
        const double db = std::pow(den, -p.beta);
        denb[c * plane + i] = db;
        coef[c * plane + i] =
            static_cast<double>(go[c * plane + i]) * in[c * plane + i] * db / den;
      }
    }
    for (int64_t c = 0; c < channels; ++c) {
      const int64_t lo = std::max<int64_t>(0, c - half);
      const int64_t hi = std::min<int64_t>(channels - 1, c + half);
      std::fill(sq.begin(), sq.end(), 0.0);  // reuse as window sum of coef
      for (int64_t j = lo; j <= hi; ++j)
        for (int64_t i = 0; i < plane; ++i) sq[i] += coef[j * plane + i];
      for (int64_t i = 0; i < plane; ++i) {
        const double v = static_cast<double>(go[c * plane + i]) * denb[c * plane + i] -
                         2.0 * p.alpha * p.beta * static_cast<double>(in[c * plane + i]) * sq[i];
        gn[c * plane + i] = static_cast<T>(v);
      }
    }
  }
  return g;
}

template <typename T>
TensorT<T> maxpool_forward(const TensorT<T>& input, int window, int stride) {
  objn::detail::check_pool_args(input, window, stride);
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t oh = (h - window) / stride + 1;
  const int64_t ow = (w - window) / stride + 1;
  TensorT<T> out({n_batch, channels, oh, ow});
#pragma omp parallel for schedule(static) collapse(2)
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t c = 0; c < channels; ++c) {
      const T* in = input.data() + (n * channels + c) * h * w;
      T* on = out.data() + (n * channels + c) * oh * ow;
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          T best = in[(y * stride) * w + x * stride];
          for (int64_t ky = 0; ky < window; ++ky)
            for (int64_t kx = 0; kx < window; ++kx) {
              const T v = in[(y * stride + ky) * w + x * stride + kx];
              if (v > best) best = v;
            }
          on[y * ow + x] = best;
        }
    }
  return out;
}

template <typename T>
TensorT<T> maxpool_backward(const TensorT<T>& input, int window, int stride,
                            const TensorT<T>& d_out) {
  const int64_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t oh = d_out.dim(2), ow = d_out.dim(3);
  TensorT<T> g(input.dims());
#pragma omp parallel for schedule(static) collapse(2)
  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t c = 0; c < channels; ++c) {
      const T* in = input.data() + (n * channels + c) * h * w;
      const T* go = d_out.data() + (n * channels + c) * oh * ow;
      T* gn = g.data() + (n * channels + c) * h * w;
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          int64_t by = y * stride, bx = x * stride;
          T best = in[by * w + bx];
          for (int64_t ky = 0; ky < window; ++ky)
            for (int64_t kx = 0; kx < window; ++kx) {
              const T v = in[(y * stride + ky) * w + x * stride + kx];
              if (v > best) {
                best = v;
                by = y * stride + ky;
                bx = x * stride + kx;
              }
            }
          gn[by * w + bx] += go[y * ow + x];
        }
    }
  return g;
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& bias) {
  objn::detail::check_dense_args(input, weights, bias);
  const int64_t n_batch = input.dim(0), d = input.dim(1), m = weights.dim(1);
  TensorT<T> out({n_batch, m});
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < n_batch; ++n) {
    T* on = out.data() + n * m;
    for (int64_t j = 0; j < m; ++j) on[j] = bias[j];
    detail::gemm_add_serial(1, d, m, input.data() + n * d, weights.data(), on);
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const TensorT<T>& d_out) {
  const int64_t n_batch = input.dim(0), d = input.dim(1), m = weights.dim(1);
  if (d_out.rank() != 2 || d_out.dim(0) != n_batch || d_out.dim(1) != m)
    throw ShapeError("dense backward: d_out shape " + d_out.shape_str() + " does not match");
  DenseGrads<T> g{TensorT<T>(input.dims()), TensorT<T>(weights.dims()), TensorT<T>({m})};

  const auto wt = detail::transposed(weights.data(), d, m);  // [m, d]
  detail::gemm_add_parallel(n_batch, m, d, d_out.data(), wt.data(), g.d_input.data());

  const auto it = detail::transposed(input.data(), n_batch, d);  // [d, n]
  detail::gemm_add_parallel(d, n_batch, m, it.data(), d_out.data(), g.d_weights.data());

  for (int64_t n = 0; n < n_batch; ++n)
    for (int64_t j = 0; j < m; ++j) g.d_bias[j] += d_out[n * m + j];
  return g;
}

}  // namespace objn::kernels
