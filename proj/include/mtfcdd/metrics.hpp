#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mtfcdd/loss.hpp"

namespace mtfcdd {

inline constexpr double kDefaultFprLimit = 0.3;
inline constexpr std::size_t kDefaultMaxThresholds = 5000;

struct RocCurve {
  std::vector<double> thresholds;  // descending; first entry is +inf
  std::vector<double> fpr;
  std::vector<double> tpr;
};

// Labels are 0 (negative) or 1 (positive). Throws MetricError unless both
// classes are present.
RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Trapezoidal area under roc_curve; equals P(s+ > s-) + P(s+ = s-) / 2.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ImageAurocReport {
  std::vector<std::optional<double>> per_class;  // empty when the class has no positives
  double mean = 0.0;                             // over present classes
};

// Class k compares images with y_ik = 1 against all-normal images; images
// positive only for other classes are left out of class k's ROC.
ImageAurocReport image_level_auroc(std::span<const double> scores, const LabelMatrix& labels);

struct Component {
  int image_id = 0;
  int class_id = 0;
  std::vector<int> pixels;  // flat row-major offsets
};

// 8-connected components of the non-zero pixels, ordered by their first
// pixel in raster order.
std::vector<Component> connected_components(std::span<const std::uint8_t> mask, int height, int width,
                                            int image_id = 0, int class_id = 0);

// One image's upsampled heatmap channel and its binary ground-truth mask.
struct PixelMap {
  std::span<const float> scores;
  std::span<const std::uint8_t> mask;
  int height = 0;
  int width = 0;
};

// AUROC over the pooled pixels of all maps.
double pixel_auroc(std::span<const PixelMap> maps);

struct ProCurve {
  std::vector<double> thresholds;  // descending; first entry is +inf
  std::vector<double> fpr;
  std::vector<double> pro;
  double fpr_limit = kDefaultFprLimit;
};

// Sweeps thresholds over the pooled scores (all unique values when there are
// at most max_thresholds of them, otherwise max_thresholds quantiles). At
// each threshold a pixel is predicted anomalous when score >= threshold; PRO
// is the mean per-component coverage and FPR the fraction of all normal
// pixels that are predicted anomalous.
ProCurve pro_curve(std::span<const PixelMap> maps, std::size_t max_thresholds = kDefaultMaxThresholds);

// Normalized area under PRO(FPR) on [0, fpr_limit]. The curve is held at its
// last PRO value if it stops short of the limit.
double aupro(const ProCurve& curve, double fpr_limit = kDefaultFprLimit);

}  // namespace mtfcdd
