#pragma once

#include <cstdint>
#include <vector>

#include "mtfcdd/autodiff.hpp"

namespace mtfcdd {

// Lower clamp on z inside the anomalous log term; bounds that term by
// about log(1 / kMinAnomalousScore) and keeps its derivative finite.
inline constexpr double kMinAnomalousScore = 1e-8;

// Binary image-level labels, rows = images, cols = anomaly types.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  // Throws ContractError if any entry is outside {0, 1}.
  LabelMatrix(int rows, int cols, std::vector<int> values);
  static LabelMatrix zeros(int rows, int cols) { return LabelMatrix(rows, cols, std::vector<int>(rows * cols, 0)); }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int at(int i, int k) const { return values_[static_cast<std::size_t>(i) * cols_ + k]; }
  void set(int i, int k, int v);
  bool is_normal(int i) const;
  int positives(int i) const;
  // True when no row carries more than one positive label.
  bool single_label_rows() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> values_;
};

// z_ik = mean over the u x v plane of heatmap channel k (batch x M result).
template <typename T>
Var<T> anomaly_scores(const Var<T>& heatmaps);

// (1 / (N M)) sum_i sum_k (1 - y_ik) z_ik - y_ik log(1 - exp(-z_ik)), with the
// log evaluated as log(-expm1(-max(z, kMinAnomalousScore))).
template <typename T>
Var<T> multitype_loss(const Var<T>& scores, const LabelMatrix& labels);

// -log(1 - exp(-z)) via expm1, clamped at kMinAnomalousScore.
double anomalous_term_stable(double z);
// -log(1 - exp(-z)) evaluated literally.
double anomalous_term_naive(double z);
// Per-sample binary FCDD objective (1 - y) z - y log(1 - exp(-z)), literal form.
double binary_fcdd_loss(double z, int y);

struct GradientSignReport {
  Tensor<double> gradient;  // d loss / d z
  bool signs_match = true;  // > 0 where y = 0, < 0 where y = 1
};
// Requires z > 0 elementwise.
GradientSignReport loss_gradient_sanity(const Tensor<double>& scores, const LabelMatrix& labels);

struct BinaryEquivalenceReport {
  double multitype_loss = 0.0;
  double binary_loss = 0.0;  // mean of binary_fcdd_loss over the batch
  double abs_difference = 0.0;
};
// Requires a single column (M = 1).
BinaryEquivalenceReport binary_mode_equivalence(const Tensor<double>& scores, const LabelMatrix& labels);

}  // namespace mtfcdd
