#pragma once

// Raw compute kernels on contiguous NCHW buffers.
//
// `kernels::` holds the OpenMP-parallel versions used by the ops layer.
// `kernels::reference::` holds direct serial loops with no blocking; they are
// kept only so tests and the benchmark can compare against them.
//
// Every parallel loop partitions output elements only. The reduction order of
// each output element is fixed, so results are bit-identical for any thread
// count.

#include <cstddef>

#include "mtfcdd/tensor.hpp"

namespace mtfcdd {

struct ConvGeometry {
  int batch = 0;
  int in_ch = 0;
  int in_h = 0;
  int in_w = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int out_h = 0;
  int out_w = 0;

  std::size_t patch() const { return static_cast<std::size_t>(in_ch) * kernel * kernel; }
  std::size_t out_plane() const { return static_cast<std::size_t>(out_h) * out_w; }
};

// Validates shapes (input NCHW, weight OC x IC x K x K, square kernel) and
// derives output extents floor((in + 2 pad - k) / stride) + 1.
ConvGeometry conv_geometry(const Shape& input, const Shape& weight, int stride, int pad);

namespace kernels {

// C(MxN) += A(MxK) * B(KxN), all row-major.
template <typename T>
void gemm_accumulate(int m, int n, int k, const T* a, const T* b, T* c);

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);

// Accumulates into whichever of grad_input / grad_weight / grad_bias is non-null.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,
                     T* grad_input, T* grad_weight, T* grad_bias);

// 2x2 window, stride 2. `argmax` receives the flat input offset chosen for each
// output element (first row-major maximum on ties).
template <typename T>
void max_pool2_forward(int planes, int in_h, int in_w, const T* input, T* output, std::size_t* argmax);

// align_corners = false sampling.
template <typename T>
void bilinear_forward(int planes, int in_h, int in_w, int out_h, int out_w, const T* input, T* output);
template <typename T>
void bilinear_backward(int planes, int in_h, int in_w, int out_h, int out_w, const T* grad_output,
                       T* grad_input);

}  // namespace kernels

namespace kernels::reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,
                     T* grad_input, T* grad_weight, T* grad_bias);
template <typename T>
void max_pool2_forward(int planes, int in_h, int in_w, const T* input, T* output);
template <typename T>
void bilinear_forward(int planes, int in_h, int in_w, int out_h, int out_w, const T* input, T* output);

}  // namespace kernels::reference

}  // namespace mtfcdd
