#include "mtfcdd/kernels.hpp"

#include <algorithm>
#include <vector>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, int stride, int pad) {
  if (input.size() != 4 || weight.size() != 4) {
    throw ConfigError("conv2d expects 4-d input and weight, got " + shape_str(input) + " and " + shape_str(weight));
  }
  if (weight[1] != input[1]) {
    throw ConfigError("conv2d channel mismatch: input " + shape_str(input) + " vs weight " + shape_str(weight));
  }
  if (weight[2] != weight[3]) throw ConfigError("conv2d requires a square kernel, got " + shape_str(weight));
  if (stride < 1 || pad < 0) throw ConfigError("conv2d requires stride >= 1 and padding >= 0");
  ConvGeometry g;
  g.batch = input[0];
  g.in_ch = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_ch = weight[0];
  g.kernel = weight[2];
  g.stride = stride;
  g.pad = pad;
  const int span_h = g.in_h + 2 * pad - g.kernel;
  const int span_w = g.in_w + 2 * pad - g.kernel;
  if (span_h < 0 || span_w < 0) {
    throw ConfigError("conv2d kernel larger than padded input " + shape_str(input));
  }
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

namespace kernels {
namespace {

// Rows of col are (c, ki, kj); columns are (n, oh, ow).
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* col) {
  const int kk = g.kernel * g.kernel;
  const std::size_t plane = g.out_plane();
  const std::size_t np = plane * g.batch;
  const int rows = static_cast<int>(g.patch());
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int c = r / kk;
    const int ki = (r % kk) / g.kernel;
    const int kj = r % g.kernel;
    T* dst = col + static_cast<std::size_t>(r) * np;
    for (int n = 0; n < g.batch; ++n) {
      const T* src = input + (static_cast<std::size_t>(n) * g.in_ch + c) * g.in_h * g.in_w;
      for (int oh = 0; oh < g.out_h; ++oh) {
        const int ih = oh * g.stride - g.pad + ki;
        for (int ow = 0; ow < g.out_w; ++ow) {
          const int iw = ow * g.stride - g.pad + kj;
          *dst++ = (ih >= 0 && ih < g.in_h && iw >= 0 && iw < g.in_w) ? src[ih * g.in_w + iw] : T{0};
        }
      }
    }
  }
}

// Transposed layout of im2col: rows are (n, oh, ow), columns are (c, ki, kj).
template <typename T>
void im2row(const ConvGeometry& g, const T* input, T* rowbuf) {
  const int kk = g.kernel * g.kernel;
  const std::size_t patch = g.patch();
  const int total = static_cast<int>(g.out_plane() * g.batch);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < total; ++q) {
    const int n = q / static_cast<int>(g.out_plane());
    const int p = q % static_cast<int>(g.out_plane());
    const int oh = p / g.out_w;
    const int ow = p % g.out_w;
    T* dst = rowbuf + static_cast<std::size_t>(q) * patch;
    for (int c = 0; c < g.in_ch; ++c) {
      const T* src = input + (static_cast<std::size_t>(n) * g.in_ch + c) * g.in_h * g.in_w;
      for (int ki = 0; ki < g.kernel; ++ki) {
        const int ih = oh * g.stride - g.pad + ki;
        for (int kj = 0; kj < g.kernel; ++kj) {
          const int iw = ow * g.stride - g.pad + kj;
          dst[c * kk + ki * g.kernel + kj] =
              (ih >= 0 && ih < g.in_h && iw >= 0 && iw < g.in_w) ? src[ih * g.in_w + iw] : T{0};
        }
      }
    }
  }
}

template <typename T>
void col2im_accumulate(const ConvGeometry& g, const T* col, T* grad_input) {
  const std::size_t plane = g.out_plane();
  const std::size_t np = plane * g.batch;
  const int planes = g.batch * g.in_ch;
#pragma omp parallel for schedule(static)
  for (int q = 0; q < planes; ++q) {
    const int n = q / g.in_ch;
    const int c = q % g.in_ch;
    T* dst = grad_input + static_cast<std::size_t>(q) * g.in_h * g.in_w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const std::size_t r = (static_cast<std::size_t>(c) * g.kernel + ki) * g.kernel + kj;
        const T* src = col + r * np + static_cast<std::size_t>(n) * plane;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.in_h) continue;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw < 0 || iw >= g.in_w) continue;
            dst[ih * g.in_w + iw] += src[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

template <typename T>
void bilinear_coord(int dst, int in, int out, int& i0, int& i1, T& frac) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  double src = (dst + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  i0 = std::min(static_cast<int>(src), in - 1);
  i1 = std::min(i0 + 1, in - 1);
  frac = static_cast<T>(src - i0);
}

}  // namespace

template <typename T>
void gemm_accumulate(int m, int n, int k, const T* a, const T* b, T* c) {
  constexpr int kRowTile = 64;
  constexpr int kColTile = 256;
  constexpr int kDepthTile = 256;
  const int row_tiles = (m + kRowTile - 1) / kRowTile;
  const int col_tiles = (n + kColTile - 1) / kColTile;
#pragma omp parallel for collapse(2) schedule(static)
  for (int rt = 0; rt < row_tiles; ++rt) {
    for (int ct = 0; ct < col_tiles; ++ct) {
      const int i_begin = rt * kRowTile;
      const int i_end = std::min(m, i_begin + kRowTile);
      const int j_begin = ct * kColTile;
      const int width = std::min(n, j_begin + kColTile) - j_begin;
      for (int k0 = 0; k0 < k; k0 += kDepthTile) {
        const int k1 = std::min(k, k0 + kDepthTile);
        int i = i_begin;
        for (; i + 4 <= i_end; i += 4) {
          T* __restrict c0 = c + static_cast<std::size_t>(i) * n + j_begin;
          T* __restrict c1 = c0 + n;
          T* __restrict c2 = c1 + n;
          T* __restrict c3 = c2 + n;
          for (int kk = k0; kk < k1; ++kk) {
            const T a0 = a[static_cast<std::size_t>(i) * k + kk];
            const T a1 = a[static_cast<std::size_t>(i + 1) * k + kk];
            const T a2 = a[static_cast<std::size_t>(i + 2) * k + kk];
            const T a3 = a[static_cast<std::size_t>(i + 3) * k + kk];
            const T* __restrict brow = b + static_cast<std::size_t>(kk) * n + j_begin;
#pragma omp simd
            for (int j = 0; j < width; ++j) {
              const T bv = brow[j];
              c0[j] += a0 * bv;
              c1[j] += a1 * bv;
              c2[j] += a2 * bv;
              c3[j] += a3 * bv;
            }
          }
        }
        for (; i < i_end; ++i) {
          T* __restrict c0 = c + static_cast<std::size_t>(i) * n + j_begin;
          for (int kk = k0; kk < k1; ++kk) {
            const T a0 = a[static_cast<std::size_t>(i) * k + kk];
            const T* __restrict brow = b + static_cast<std::size_t>(kk) * n + j_begin;
#pragma omp simd
            for (int j = 0; j < width; ++j) c0[j] += a0 * brow[j];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const std::size_t plane = g.out_plane();
  const std::size_t np = plane * g.batch;
  const std::size_t patch = g.patch();

  std::vector<T> col;
  const T* bmat = nullptr;
  const bool direct = g.kernel == 1 && g.stride == 1 && g.pad == 0 && g.batch == 1;
  if (direct) {
    bmat = input;
  } else {
    col.resize(patch * np);
    im2col(g, input, col.data());
    bmat = col.data();
  }

  std::vector<T> out(static_cast<std::size_t>(g.out_ch) * np, T{0});
  gemm_accumulate(g.out_ch, static_cast<int>(np), static_cast<int>(patch), weight, bmat, out.data());

  const int planes = g.batch * g.out_ch;
#pragma omp parallel for schedule(static)
  for (int q = 0; q < planes; ++q) {
    const int n = q / g.out_ch;
    const int o = q % g.out_ch;
    const T* src = out.data() + static_cast<std::size_t>(o) * np + static_cast<std::size_t>(n) * plane;
    T* dst = output + static_cast<std::size_t>(q) * plane;
    const T b = bias ? bias[o] : T{0};
    for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output,
                     T* grad_input, T* grad_weight, T* grad_bias) {
  const std::size_t plane = g.out_plane();
  const std::size_t np = plane * g.batch;
  const std::size_t patch = g.patch();

  // Gather grad_output into (out_ch) x (n, oh, ow).
  std::vector<T> gmat(static_cast<std::size_t>(g.out_ch) * np);
#pragma omp parallel for schedule(static)
  for (int o = 0; o < g.out_ch; ++o) {
    for (int n = 0; n < g.batch; ++n) {
      const T* src = grad_output + (static_cast<std::size_t>(n) * g.out_ch + o) * plane;
      std::copy(src, src + plane, gmat.data() + static_cast<std::size_t>(o) * np + n * plane);
    }
  }

  if (grad_bias) {
    for (int o = 0; o < g.out_ch; ++o) {
      T s{0};
      const T* row = gmat.data() + static_cast<std::size_t>(o) * np;
      for (std::size_t p = 0; p < np; ++p) s += row[p];
      grad_bias[o] += s;
    }
  }

  if (grad_weight) {
    std::vector<T> rows(np * patch);
    im2row(g, input, rows.data());
    gemm_accumulate(g.out_ch, static_cast<int>(patch), static_cast<int>(np), gmat.data(), rows.data(), grad_weight);
  }

  if (grad_input) {
    std::vector<T> wt(patch * g.out_ch);
    for (int o = 0; o < g.out_ch; ++o) {
      for (std::size_t r = 0; r < patch; ++r) wt[r * g.out_ch + o] = weight[o * patch + r];
    }
    std::vector<T> dcol(patch * np, T{0});
    gemm_accumulate(static_cast<int>(patch), static_cast<int>(np), g.out_ch, wt.data(), gmat.data(), dcol.data());
    col2im_accumulate(g, dcol.data(), grad_input);
  }
}

template <typename T>
void max_pool2_forward(int planes, int in_h, int in_w, const T* input, T* output, std::size_t* argmax) {
  const int out_h = in_h / 2;
  const int out_w = in_w / 2;
#pragma omp parallel for schedule(static)
  for (int q = 0; q < planes; ++q) {
    const std::size_t in_base = static_cast<std::size_t>(q) * in_h * in_w;
    const std::size_t out_base = static_cast<std::size_t>(q) * out_h * out_w;
    for (int oh = 0; oh < out_h; ++oh) {
      for (int ow = 0; ow < out_w; ++ow) {
        std::size_t best = in_base + static_cast<std::size_t>(2 * oh) * in_w + 2 * ow;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_base + static_cast<std::size_t>(2 * oh + dy) * in_w + 2 * ow + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        output[out_base + oh * out_w + ow] = input[best];
        argmax[out_base + oh * out_w + ow] = best;
      }
    }
  }
}

template <typename T>
void bilinear_forward(int planes, int in_h, int in_w, int out_h, int out_w, const T* input, T* output) {
  std::vector<int> y0(out_h), y1(out_h), x0(out_w), x1(out_w);
  std::vector<T> fy(out_h), fx(out_w);
  for (int y = 0; y < out_h; ++y) bilinear_coord(y, in_h, out_h, y0[y], y1[y], fy[y]);
  for (int x = 0; x < out_w; ++x) bilinear_coord(x, in_w, out_w, x0[x], x1[x], fx[x]);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < planes; ++q) {
    const T* src = input + static_cast<std::size_t>(q) * in_h * in_w;
    T* dst = output + static_cast<std::size_t>(q) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const T* r0 = src + y0[y] * in_w;
      const T* r1 = src + y1[y] * in_w;
      const T wy1 = fy[y];
      const T wy0 = T{1} - wy1;
      for (int x = 0; x < out_w; ++x) {
        const T wx1 = fx[x];
        const T wx0 = T{1} - wx1;
        dst[y * out_w + x] = wy0 * (wx0 * r0[x0[x]] + wx1 * r0[x1[x]]) + wy1 * (wx0 * r1[x0[x]] + wx1 * r1[x1[x]]);
      }
    }
  }
}

template <typename T>
void bilinear_backward(int planes, int in_h, int in_w, int out_h, int out_w, const T* grad_output,
                       T* grad_input) {
  std::vector<int> y0(out_h), y1(out_h), x0(out_w), x1(out_w);
  std::vector<T> fy(out_h), fx(out_w);
  for (int y = 0; y < out_h; ++y) bilinear_coord(y, in_h, out_h, y0[y], y1[y], fy[y]);
  for (int x = 0; x < out_w; ++x) bilinear_coord(x, in_w, out_w, x0[x], x1[x], fx[x]);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < planes; ++q) {
    const T* src = grad_output + static_cast<std::size_t>(q) * out_h * out_w;
    T* dst = grad_input + static_cast<std::size_t>(q) * in_h * in_w;
    for (int y = 0; y < out_h; ++y) {
      const T wy1 = fy[y];
      const T wy0 = T{1} - wy1;
      for (int x = 0; x < out_w; ++x) {
        const T wx1 = fx[x];
        const T wx0 = T{1} - wx1;
        const T gv = src[y * out_w + x];
        dst[y0[y] * in_w + x0[x]] += wy0 * wx0 * gv;
        dst[y0[y] * in_w + x1[x]] += wy0 * wx1 * gv;
        dst[y1[y] * in_w + x0[x]] += wy1 * wx0 * gv;
        dst[y1[y] * in_w + x1[x]] += wy1 * wx1 * gv;
      }
    }
  }
}

#define MTFCDD_INSTANTIATE(T)                                                                                    \
  template void gemm_accumulate<T>(int, int, int, const T*, const T*, T*);                                       \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);                        \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*);               \
  template void max_pool2_forward<T>(int, int, int, const T*, T*, std::size_t*);                                 \
  template void bilinear_forward<T>(int, int, int, int, int, const T*, T*);                                      \
  template void bilinear_backward<T>(int, int, int, int, int, const T*, T*);

MTFCDD_INSTANTIATE(float)
MTFCDD_INSTANTIATE(double)
#undef MTFCDD_INSTANTIATE

}  // namespace kernels
}  // namespace mtfcdd
