#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mtfcdd/autodiff.hpp"

namespace mtfcdd {

struct GradCheckReport {
  // One entry per input: max over elements of |analytic - numeric| / max(|analytic|, |numeric|, floor).
  std::vector<double> max_rel_error;
  double worst() const;
  bool passed(double tolerance) const { return worst() < tolerance; }
};

// Builds a scalar-valued graph from leaf variables (one per input tensor).
using ScalarGraph = std::function<Var<double>(std::span<const Var<double>>)>;

// Compares reverse-mode gradients of `graph` against central differences
// (f(x + h) - f(x - h)) / 2h evaluated per element in 64-bit precision.
GradCheckReport finite_difference_check(const ScalarGraph& graph, const std::vector<Tensor<double>>& inputs,
                                        double step = 1e-5, double floor = 1e-6);

}  // namespace mtfcdd
