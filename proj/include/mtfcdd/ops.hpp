#pragma once

#include "mtfcdd/autodiff.hpp"

namespace mtfcdd {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

enum class BnMode { kTrain, kEval };

// Running per-channel statistics. The variance is the unbiased batch
// estimate, blended with momentum 0.1.
template <typename T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;

  BatchNormStats() = default;
  explicit BatchNormStats(int channels) : mean(Shape{channels}, T{0}), var(Shape{channels}, T{1}) {}
};

// Empty `bias` means no bias term.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride, int pad);

template <typename T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats,
                  BnMode mode);

template <typename T>
Var<T> relu(const Var<T>& input);

// 2x2 window, stride 2; odd trailing rows/cols are dropped.
template <typename T>
Var<T> max_pool2(const Var<T>& input);

template <typename T>
Var<T> bilinear_upsample(const Var<T>& input, int out_h, int out_w);

// Elementwise sqrt(x^2 + 1) - 1.
template <typename T>
Var<T> pseudo_huber(const Var<T>& input);

// (N, C, H, W) -> (N, C): per-channel mean over the spatial plane. Input must
// be non-negative, so this is the plane's L1 norm divided by H*W.
template <typename T>
Var<T> spatial_mean(const Var<T>& input);

// Scalar sum of all elements, shape {1}.
template <typename T>
Var<T> sum(const Var<T>& input);

// Scalar sum(input * weights) for a constant same-shape weight tensor.
template <typename T>
Var<T> weighted_sum(const Var<T>& input, const Tensor<T>& weights);

}  // namespace mtfcdd
