#include "mtfcdd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

GradCheckReport finite_difference_check(const ScalarGraph& graph, const std::vector<Tensor<double>>& inputs,
                                        double step, double floor) {
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.emplace_back(t, true);
  const Var<double> out = graph(leaves);
  if (out.value().size() != 1) throw ConfigError("finite_difference_check needs a scalar graph output");
  backward(out);

  auto evaluate = [&](std::size_t which, std::size_t index, double delta) {
    std::vector<Var<double>> probe;
    probe.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor<double> t = inputs[i];
      if (i == which) t[index] += delta;
      probe.emplace_back(std::move(t), false);
    }
    return graph(probe).value()[0];
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double worst = 0.0;
    const bool has_grad = leaves[i].has_grad();
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double numeric = (evaluate(i, j, step) - evaluate(i, j, -step)) / (2.0 * step);
      const double analytic = has_grad ? leaves[i].grad()[j] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    report.max_rel_error.push_back(worst);
  }
  return report;
}

}  // namespace mtfcdd
