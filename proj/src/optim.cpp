#include "mtfcdd/optim.hpp"

#include <cmath>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

template <typename T>
Parameter<T>::Parameter(std::string n, Tensor<T> value, bool train)
    : name(std::move(n)),
      var(std::move(value), train, name),
      trainable(train),
      first_moment(var.value().shape()),
      second_moment(var.value().shape()) {}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamOptions& options) {
  for (Parameter<T>* p : params) {
    if (!p->trainable || !p->var.has_grad()) continue;
    if (!p->var.grad().all_finite()) throw NumericError("non-finite gradient for parameter '" + p->name + "'");
  }
  for (Parameter<T>* p : params) {
    if (!p->trainable) continue;
    p->step += 1;
    if (!p->var.has_grad()) continue;
    const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(p->step));
    const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(p->step));
    const T b1 = static_cast<T>(options.beta1);
    const T b2 = static_cast<T>(options.beta2);
    const T step_size = static_cast<T>(options.lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(options.eps);
    const Tensor<T>& grad = p->var.grad();
    Tensor<T>& value = p->mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const T g = grad[i];
      p->first_moment[i] = b1 * p->first_moment[i] + (T{1} - b1) * g;
      p->second_moment[i] = b2 * p->second_moment[i] + (T{1} - b2) * g * g;
      value[i] -= step_size * p->first_moment[i] / (std::sqrt(p->second_moment[i]) * inv_sqrt_bc2 + eps);
    }
    p->var.zero_grad();
  }
}

template struct Parameter<float>;
template struct Parameter<double>;
template void adam_step(std::span<Parameter<float>* const>, const AdamOptions&);
template void adam_step(std::span<Parameter<double>* const>, const AdamOptions&);

}  // namespace mtfcdd
