#include "mtfcdd/loss.hpp"

#include <algorithm>
#include <cmath>

#include "mtfcdd/error.hpp"
#include "mtfcdd/ops.hpp"

namespace mtfcdd {

LabelMatrix::LabelMatrix(int rows, int cols, std::vector<int> values) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * cols) {
    throw ContractError("label matrix shape does not match its value count");
  }
  values_.reserve(values.size());
  for (int v : values) {
    if (v != 0 && v != 1) throw ContractError("label " + std::to_string(v) + " is outside {0, 1}");
    values_.push_back(static_cast<std::uint8_t>(v));
  }
}

void LabelMatrix::set(int i, int k, int v) {
  if (v != 0 && v != 1) throw ContractError("label " + std::to_string(v) + " is outside {0, 1}");
  values_.at(static_cast<std::size_t>(i) * cols_ + k) = static_cast<std::uint8_t>(v);
}

bool LabelMatrix::is_normal(int i) const { return positives(i) == 0; }

int LabelMatrix::positives(int i) const {
  int c = 0;
  for (int k = 0; k < cols_; ++k) c += at(i, k);
  return c;
}

bool LabelMatrix::single_label_rows() const {
  for (int i = 0; i < rows_; ++i) {
    if (positives(i) > 1) return false;
  }
  return true;
}

template <typename T>
Var<T> anomaly_scores(const Var<T>& heatmaps) {
  return spatial_mean(heatmaps);
}

double anomalous_term_stable(double z) { return -std::log(-std::expm1(-std::max(z, kMinAnomalousScore))); }

double anomalous_term_naive(double z) { return -std::log(1.0 - std::exp(-z)); }

double binary_fcdd_loss(double z, int y) { return (1 - y) * z + y * anomalous_term_naive(z); }

template <typename T>
Var<T> multitype_loss(const Var<T>& scores, const LabelMatrix& labels) {
  const Shape& s = scores.shape();
  if (s.size() != 2 || s[0] != labels.rows() || s[1] != labels.cols()) {
    throw ConfigError("loss: score shape " + shape_str(s) + " does not match labels " +
                      std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
  }
  const int n = s[0];
  const int m = s[1];
  const double norm = 1.0 / (static_cast<double>(n) * m);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < m; ++k) {
      const double z = scores.value()[static_cast<std::size_t>(i) * m + k];
      if (z < 0.0) throw ContractError("anomaly score is negative");
      total += labels.at(i, k) ? anomalous_term_stable(z) : z;
    }
  }
  Tensor<T> out(Shape{1}, static_cast<T>(total / (static_cast<double>(n) * m)));
  return Var<T>::make_result(std::move(out), "multitype_loss", {scores}, [labels, n, m, norm](Node<T>& self) {
    auto& p = *self.parents[0];
    const double upstream = self.grad[0];
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < m; ++k) {
        const std::size_t idx = static_cast<std::size_t>(i) * m + k;
        double d = 1.0;
        if (labels.at(i, k)) {
          // d/dz [-log(1 - e^-z)] = -1 / (e^z - 1), taken at the clamped z.
          d = -1.0 / std::expm1(std::max(static_cast<double>(p.value[idx]), kMinAnomalousScore));
        }
        p.grad[idx] += static_cast<T>(upstream * norm * d);
      }
    }
  });
}

GradientSignReport loss_gradient_sanity(const Tensor<double>& scores, const LabelMatrix& labels) {
  for (double z : scores.values()) {
    if (!(z > 0.0)) throw ContractError("loss_gradient_sanity requires z > 0");
  }
  Var<double> z(scores, true);
  backward(multitype_loss(z, labels));
  GradientSignReport r;
  r.gradient = z.grad();
  for (int i = 0; i < labels.rows(); ++i) {
    for (int k = 0; k < labels.cols(); ++k) {
      const double g = r.gradient[static_cast<std::size_t>(i) * labels.cols() + k];
      r.signs_match = r.signs_match && (labels.at(i, k) ? g < 0.0 : g > 0.0);
    }
  }
  return r;
}

BinaryEquivalenceReport binary_mode_equivalence(const Tensor<double>& scores, const LabelMatrix& labels) {
  if (labels.cols() != 1) throw ConfigError("binary_mode_equivalence requires a single anomaly type");
  BinaryEquivalenceReport r;
  r.multitype_loss = multitype_loss(Var<double>(scores), labels).value()[0];
  double acc = 0.0;
  for (int i = 0; i < labels.rows(); ++i) acc += binary_fcdd_loss(scores[i], labels.at(i, 0));
  r.binary_loss = acc / labels.rows();
  r.abs_difference = std::abs(r.multitype_loss - r.binary_loss);
  return r;
}

template Var<float> anomaly_scores(const Var<float>&);
template Var<double> anomaly_scores(const Var<double>&);
template Var<float> multitype_loss(const Var<float>&, const LabelMatrix&);
template Var<double> multitype_loss(const Var<double>&, const LabelMatrix&);

}  // namespace mtfcdd
