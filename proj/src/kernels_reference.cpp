#include <algorithm>
#include <cmath>

#include "mtfcdd/kernels.hpp"

namespace mtfcdd::kernels::reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_ch; ++o) {
      for (int oh = 0; oh < g.out_h; ++oh) {
        for (int ow = 0; ow < g.out_w; ++ow) {
          T acc = bias ? bias[o] : T{0};
          for (int c = 0; c < g.in_ch; ++c) {
            for (int ki = 0; ki < g.kernel; ++ki) {
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int ih = oh * g.stride - g.pad + ki;
                const int iw = ow * g.stride - g.pad + kj;
                if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
                acc += input[((n * g.in_ch + c) * g.in_h + ih) * g.in_w + iw] *
                       weight[((o * g.in_ch + c) * g.kernel + ki) * g.kernel + kj];
              }
            }
          }
          output[((n * g.out_ch + o) * g.out_h + oh) * g.out_w + ow] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,
                     T* grad_input, T* grad_weight, T* grad_bias) {
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_ch; ++o) {
      for (int oh = 0; oh < g.out_h; ++oh) {
        for (int ow = 0; ow < g.out_w; ++ow) {
          const T go = grad_output[((n * g.out_ch + o) * g.out_h + oh) * g.out_w + ow];
          if (grad_bias) grad_bias[o] += go;
          for (int c = 0; c < g.in_ch; ++c) {
            for (int ki = 0; ki < g.kernel; ++ki) {
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int ih = oh * g.stride - g.pad + ki;
                const int iw = ow * g.stride - g.pad + kj;
                if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) continue;
                const std::size_t in_idx = ((n * g.in_ch + c) * g.in_h + ih) * g.in_w + iw;
                const std::size_t w_idx = ((o * g.in_ch + c) * g.kernel + ki) * g.kernel + kj;
                if (grad_input) grad_input[in_idx] += go * weight[w_idx];
                if (grad_weight) grad_weight[w_idx] += go * input[in_idx];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void max_pool2_forward(int planes, int in_h, int in_w, const T* input, T* output) {
  const int out_h = in_h / 2;
  const int out_w = in_w / 2;
  for (int q = 0; q < planes; ++q) {
    for (int oh = 0; oh < out_h; ++oh) {
      for (int ow = 0; ow < out_w; ++ow) {
        const T* p = input + (static_cast<std::size_t>(q) * in_h + 2 * oh) * in_w + 2 * ow;
        output[(static_cast<std::size_t>(q) * out_h + oh) * out_w + ow] =
            std::max(std::max(p[0], p[1]), std::max(p[in_w], p[in_w + 1]));
      }
    }
  }
}

// Direct evaluation of the align_corners = false sampling formula per pixel.
template <typename T>
void bilinear_forward(int planes, int in_h, int in_w, int out_h, int out_w, const T* input, T* output) {
  for (int q = 0; q < planes; ++q) {
    for (int y = 0; y < out_h; ++y) {
      const double sy = std::max(0.0, (y + 0.5) * in_h / out_h - 0.5);
      const int y0 = std::min(static_cast<int>(std::floor(sy)), in_h - 1);
      const int y1 = std::min(y0 + 1, in_h - 1);
      const double ly = sy - y0;
      for (int x = 0; x < out_w; ++x) {
        const double sx = std::max(0.0, (x + 0.5) * in_w / out_w - 0.5);
        const int x0 = std::min(static_cast<int>(std::floor(sx)), in_w - 1);
        const int x1 = std::min(x0 + 1, in_w - 1);
        const double lx = sx - x0;
        const T* src = input + static_cast<std::size_t>(q) * in_h * in_w;
        const double v = (1 - ly) * (1 - lx) * src[y0 * in_w + x0] + (1 - ly) * lx * src[y0 * in_w + x1] +
                         ly * (1 - lx) * src[y1 * in_w + x0] + ly * lx * src[y1 * in_w + x1];
        output[(static_cast<std::size_t>(q) * out_h + y) * out_w + x] = static_cast<T>(v);
      }
    }
  }
}

#define MTFCDD_INSTANTIATE(T)                                                                      \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);          \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*); \
  template void max_pool2_forward<T>(int, int, int, const T*, T*);                                 \
  template void bilinear_forward<T>(int, int, int, int, int, const T*, T*);

MTFCDD_INSTANTIATE(float)
MTFCDD_INSTANTIATE(double)
#undef MTFCDD_INSTANTIATE

}  // namespace mtfcdd::kernels::reference
