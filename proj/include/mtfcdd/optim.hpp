#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "mtfcdd/autodiff.hpp"

namespace mtfcdd {

// A trainable (or frozen) leaf plus its Adam moments.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
  bool trainable = true;
  Tensor<T> first_moment;
  Tensor<T> second_moment;
  std::int64_t step = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> value, bool train = true);

  const Tensor<T>& value() const { return var.value(); }
  Tensor<T>& mutable_value() { return var.mutable_value(); }
  void set_trainable(bool t) {
    trainable = t;
    var.set_requires_grad(t);
  }
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update per trainable parameter, then zeroes the
// gradients. Parameters without a gradient are treated as having a zero
// gradient. Frozen parameters are skipped entirely.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamOptions& options);

extern template struct Parameter<float>;
extern template struct Parameter<double>;

}  // namespace mtfcdd
