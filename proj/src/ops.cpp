#include "mtfcdd/ops.hpp"

#include <cmath>
#include <memory>
#include <vector>

#include "mtfcdd/error.hpp"
#include "mtfcdd/kernels.hpp"

namespace mtfcdd {
namespace {

void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4) throw ConfigError(std::string(op) + " expects a 4-d (N,C,H,W) tensor, got " + shape_str(s));
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), stride, pad);
  if (bias && (bias.shape().size() != 1 || bias.shape()[0] != g.out_ch)) {
    throw ConfigError("conv2d bias shape " + shape_str(bias.shape()) + " does not match " +
                      std::to_string(g.out_ch) + " output channels");
  }
  Tensor<T> out(Shape{g.batch, g.out_ch, g.out_h, g.out_w});
  kernels::conv2d_forward(g, input.value().data(), weight.value().data(), bias ? bias.value().data() : nullptr,
                          out.data());
  std::vector<Var<T>> parents{input, weight};
  if (bias) parents.push_back(bias);
  const bool has_bias = static_cast<bool>(bias);
  return Var<T>::make_result(std::move(out), "conv2d", parents, [g, has_bias](Node<T>& self) {
    auto& in = *self.parents[0];
    auto& w = *self.parents[1];
    T* gi = in.requires_grad ? in.grad.data() : nullptr;
    T* gw = w.requires_grad ? w.grad.data() : nullptr;
    T* gb = nullptr;
    if (has_bias && self.parents[2]->requires_grad) gb = self.parents[2]->grad.data();
    kernels::conv2d_backward(g, in.value.data(), w.value.data(), self.grad.data(), gi, gw, gb);
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats,
                  BnMode mode) {
  require_rank4(input.shape(), "batch_norm");
  const int n = input.shape()[0];
  const int c = input.shape()[1];
  const std::size_t plane = static_cast<std::size_t>(input.shape()[2]) * input.shape()[3];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ConfigError("batch_norm gamma/beta must have length " + std::to_string(c));
  }
  if (stats.mean.shape() != Shape{c} || stats.var.shape() != Shape{c}) {
    throw ConfigError("batch_norm running stats must have length " + std::to_string(c));
  }
  const std::size_t count = plane * n;
  const T* x = input.value().data();
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();

  Tensor<T> out(input.shape());
  auto xhat = std::make_shared<std::vector<T>>(input.value().size());
  auto inv_std = std::make_shared<std::vector<T>>(c);

#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == BnMode::kTrain) {
      for (int b = 0; b < n; ++b) {
        const T* p = x + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= static_cast<double>(count);
      for (int b = 0; b < n; ++b) {
        const T* p = x + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      const double unbiased = count > 1 ? var / static_cast<double>(count - 1) : var / static_cast<double>(count);
      var /= static_cast<double>(count);
      stats.mean[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * stats.mean[ch] + kBatchNormMomentum * mean);
      stats.var[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * stats.var[ch] + kBatchNormMomentum * unbiased);
    } else {
      mean = stats.mean[ch];
      var = stats.var[ch];
    }
    const T istd = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
    const T mu = static_cast<T>(mean);
    (*inv_std)[ch] = istd;
    for (int b = 0; b < n; ++b) {
      const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (x[base + i] - mu) * istd;
        (*xhat)[base + i] = xh;
        out[base + i] = gm[ch] * xh + bt[ch];
      }
    }
  }

  return Var<T>::make_result(
      std::move(out), "batch_norm", {input, gamma, beta}, [n, c, plane, count, mode, xhat, inv_std](Node<T>& self) {
        auto& in = *self.parents[0];
        auto& gam = *self.parents[1];
        auto& bet = *self.parents[2];
        const T* dy = self.grad.data();
#pragma omp parallel for schedule(static)
        for (int ch = 0; ch < c; ++ch) {
          T sum_dy{0};
          T sum_dy_xhat{0};
          for (int b = 0; b < n; ++b) {
            const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += dy[base + i];
              sum_dy_xhat += dy[base + i] * (*xhat)[base + i];
            }
          }
          if (gam.requires_grad) gam.grad[ch] += sum_dy_xhat;
          if (bet.requires_grad) bet.grad[ch] += sum_dy;
          if (!in.requires_grad) continue;
          const T g = gam.value[ch] * (*inv_std)[ch];
          const T m = static_cast<T>(count);
          for (int b = 0; b < n; ++b) {
            const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (mode == BnMode::kTrain) {
                in.grad[base + i] += g / m * (m * dy[base + i] - sum_dy - (*xhat)[base + i] * sum_dy_xhat);
              } else {
                in.grad[base + i] += g * dy[base + i];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
  Tensor<T> out(input.shape());
  const auto in = input.value().values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
  return Var<T>::make_result(std::move(out), "relu", {input}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (p.value[i] > T{0}) p.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> max_pool2(const Var<T>& input) {
  require_rank4(input.shape(), "max_pool2");
  const Shape& s = input.shape();
  if (s[2] < 2 || s[3] < 2) throw ConfigError("max_pool2 needs spatial extents >= 2, got " + shape_str(s));
  Tensor<T> out(Shape{s[0], s[1], s[2] / 2, s[3] / 2});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  kernels::max_pool2_forward(s[0] * s[1], s[2], s[3], input.value().data(), out.data(), argmax->data());
  return Var<T>::make_result(std::move(out), "max_pool2", {input}, [argmax](Node<T>& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < argmax->size(); ++i) p.grad[(*argmax)[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> bilinear_upsample(const Var<T>& input, int out_h, int out_w) {
  require_rank4(input.shape(), "bilinear_upsample");
  const Shape& s = input.shape();
  if (out_h < s[2] || out_w < s[3]) {
    throw ConfigError("bilinear_upsample target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                      " is smaller than source " + shape_str(s));
  }
  const int planes = s[0] * s[1];
  const int in_h = s[2];
  const int in_w = s[3];
  Tensor<T> out(Shape{s[0], s[1], out_h, out_w});
  kernels::bilinear_forward(planes, in_h, in_w, out_h, out_w, input.value().data(), out.data());
  return Var<T>::make_result(std::move(out), "bilinear_upsample", {input},
                             [planes, in_h, in_w, out_h, out_w](Node<T>& self) {
                               kernels::bilinear_backward(planes, in_h, in_w, out_h, out_w, self.grad.data(),
                                                          self.parents[0]->grad.data());
                             });
}

template <typename T>
Var<T> pseudo_huber(const Var<T>& input) {
  Tensor<T> out(input.shape());
  const auto in = input.value().values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::sqrt(in[i] * in[i] + T{1}) - T{1};
  return Var<T>::make_result(std::move(out), "pseudo_huber", {input}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T v = p.value[i];
      p.grad[i] += self.grad[i] * v / std::sqrt(v * v + T{1});
    }
  });
}

template <typename T>
Var<T> spatial_mean(const Var<T>& input) {
  require_rank4(input.shape(), "spatial_mean");
  const Shape& s = input.shape();
  const std::size_t planes = static_cast<std::size_t>(s[0]) * s[1];
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  Tensor<T> out(Shape{s[0], s[1]});
  const T* x = input.value().data();
  for (std::size_t q = 0; q < planes; ++q) {
    T acc{0};
    for (std::size_t i = 0; i < plane; ++i) {
      const T v = x[q * plane + i];
      if (v < T{0}) throw ContractError("anomaly heatmap has a negative element; scores require A >= 0");
      acc += v;
    }
    out[q] = acc / static_cast<T>(plane);
  }
  return Var<T>::make_result(std::move(out), "spatial_mean", {input}, [planes, plane](Node<T>& self) {
    auto& p = *self.parents[0];
    const T inv = T{1} / static_cast<T>(plane);
    for (std::size_t q = 0; q < planes; ++q) {
      const T gq = self.grad[q] * inv;
      for (std::size_t i = 0; i < plane; ++i) p.grad[q * plane + i] += gq;
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
  T acc{0};
  for (T v : input.value().values()) acc += v;
  return Var<T>::make_result(Tensor<T>(Shape{1}, acc), "sum", {input}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    for (auto& g : p.grad.values()) g += self.grad[0];
  });
}

template <typename T>
Var<T> weighted_sum(const Var<T>& input, const Tensor<T>& weights) {
  if (weights.shape() != input.shape()) {
    throw ConfigError("weighted_sum weight shape " + shape_str(weights.shape()) + " != " + shape_str(input.shape()));
  }
  T acc{0};
  for (std::size_t i = 0; i < weights.size(); ++i) acc += input.value()[i] * weights[i];
  return Var<T>::make_result(Tensor<T>(Shape{1}, acc), "weighted_sum", {input}, [weights](Node<T>& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < weights.size(); ++i) p.grad[i] += self.grad[0] * weights[i];
  });
}

#define MTFCDD_INSTANTIATE(T)                                                                             \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                          \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>&, BnMode);   \
  template Var<T> relu(const Var<T>&);                                                                    \
  template Var<T> max_pool2(const Var<T>&);                                                               \
  template Var<T> bilinear_upsample(const Var<T>&, int, int);                                             \
  template Var<T> pseudo_huber(const Var<T>&);                                                            \
  template Var<T> spatial_mean(const Var<T>&);                                                            \
  template Var<T> sum(const Var<T>&);                                                                     \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

MTFCDD_INSTANTIATE(float)
MTFCDD_INSTANTIATE(double)
#undef MTFCDD_INSTANTIATE

}  // namespace mtfcdd
