#pragma once

#include <cstdint>
#include <string>

#include "objn/tensor.hpp"

namespace objn {

struct LrnParams {
  double k = 2.0;
  int n = 5;
  double alpha = 1e-4;
  double beta = 0.75;
};

template <typename T>
struct Conv2dGrads {
  TensorT<T> d_input;
  TensorT<T> d_weights;
  TensorT<T> d_bias;
};

template <typename T>
struct DenseGrads {
  TensorT<T> d_input;
  TensorT<T> d_weights;
  TensorT<T> d_bias;
};

namespace detail {

template <typename T>
void check_conv_args(const TensorT<T>& input, const TensorT<T>& weights,
                     const TensorT<T>& bias, int stride, int pad) {
  if (input.rank() != 4) throw ShapeError("conv2d: input must be NCHW, got " + input.shape_str());
  if (weights.rank() != 4) throw ShapeError("conv2d: weights must be FCKK, got " + weights.shape_str());
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(0))
    throw ShapeError("conv2d: bias shape " + bias.shape_str() + " does not match filter count " +
                     std::to_string(weights.dim(0)));
  if (input.dim(1) != weights.dim(1))
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) +
                     " != kernel channels " + std::to_string(weights.dim(1)));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
  if (input.dim(2) + 2 * pad < weights.dim(2) || input.dim(3) + 2 * pad < weights.dim(3))
    throw ShapeError("conv2d: kernel " + weights.shape_str() + " larger than padded input " +
                     input.shape_str() + " with pad " + std::to_string(pad));
  if (!all_finite(input)) throw ShapeError("conv2d: non-finite input");
}

template <typename T>
void check_lrn_args(const TensorT<T>& input, const LrnParams& p) {
  if (input.rank() != 4) throw ShapeError("lrn: input must be NCHW, got " + input.shape_str());
  if (p.n < 1 || p.n % 2 == 0) throw ShapeError("lrn: window n must be odd and >= 1, got " + std::to_string(p.n));
  if (p.k <= 0) throw ShapeError("lrn: k must be > 0");
  if (p.beta <= 0) throw ShapeError("lrn: beta must be > 0");
  if (p.alpha < 0) throw ShapeError("lrn: alpha must be >= 0");
}

template <typename T>
void check_pool_args(const TensorT<T>& input, int window, int stride) {
  if (input.rank() != 4) throw ShapeError("maxpool: input must be NCHW, got " + input.shape_str());
  if (window < 1 || stride < 1) throw ShapeError("maxpool: window and stride must be >= 1");
  if (window > input.dim(2) || window > input.dim(3))
    throw ShapeError("maxpool: window " + std::to_string(window) + " larger than input " + input.shape_str());
}

template <typename T>
void check_dense_args(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias) {
  if (input.rank() != 2) throw ShapeError("dense: input must be NxD, got " + input.shape_str());
  if (weights.rank() != 2) throw ShapeError("dense: weights must be DxM, got " + weights.shape_str());
  if (input.dim(1) != weights.dim(0))
    throw ShapeError("dense: inner dims disagree, input " + input.shape_str() + " vs weights " +
                     weights.shape_str());
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(1))
    throw ShapeError("dense: bias shape " + bias.shape_str() + " does not match out features " +
                     std::to_string(weights.dim(1)));
}

}  // namespace detail
}  // namespace objn
