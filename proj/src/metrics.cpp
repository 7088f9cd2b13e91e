#include "mtfcdd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ConfigError("roc_curve: scores and labels differ in length");
  std::size_t positives = 0;
  for (auto l : labels) positives += l ? 1 : 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("ROC undefined: need both positive and negative samples");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve c;
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  c.fpr.push_back(0.0);
  c.tpr.push_back(0.0);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    c.thresholds.push_back(s);
    c.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
    c.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  return c;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ConfigError("auroc: scores and labels differ in length");
  std::size_t positives = 0;
  for (auto l : labels) positives += l ? 1 : 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("AUROC undefined: need both positive and negative samples");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Twice the trapezoid area in count units stays an exact integer.
  double twice_area = 0.0;
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    double dtp = 0.0;
    double dfp = 0.0;
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? dtp : dfp) += 1.0;
      ++i;
    }
    twice_area += dfp * (2.0 * tp + dtp);
    tp += dtp;
    fp += dfp;
  }
  return twice_area / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

ImageAurocReport image_level_auroc(std::span<const double> scores, const LabelMatrix& labels) {
  const int n = labels.rows();
  const int m = labels.cols();
  if (scores.size() != static_cast<std::size_t>(n) * m) {
    throw ConfigError("image_level_auroc: score matrix does not match labels");
  }
  ImageAurocReport r;
  r.per_class.resize(m);
  double total = 0.0;
  int present = 0;
  for (int k = 0; k < m; ++k) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < n; ++i) {
      if (labels.at(i, k) || labels.is_normal(i)) {
        s.push_back(scores[static_cast<std::size_t>(i) * m + k]);
        y.push_back(static_cast<std::uint8_t>(labels.at(i, k)));
      }
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(y.size())) continue;
    r.per_class[k] = auroc(s, y);
    total += *r.per_class[k];
    ++present;
  }
  if (present == 0) throw MetricError("image-level AUROC undefined: no class has both positives and normals");
  r.mean = total / present;
  return r;
}

std::vector<Component> connected_components(std::span<const std::uint8_t> mask, int height, int width,
                                            int image_id, int class_id) {
  if (mask.size() != static_cast<std::size_t>(height) * width) {
    throw ConfigError("connected_components: mask size does not match " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  std::vector<int> label(mask.size(), -1);
  std::vector<Component> out;
  std::vector<int> queue;
  for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
    if (!mask[start] || label[start] >= 0) continue;
    Component comp;
    comp.image_id = image_id;
    comp.class_id = class_id;
    const int id = static_cast<int>(out.size());
    queue.assign(1, start);
    label[start] = id;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int p = queue[head];
      const int y = p / width;
      const int x = p % width;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
          const int q = ny * width + nx;
          if (mask[q] && label[q] < 0) {
            label[q] = id;
            queue.push_back(q);
          }
        }
      }
    }
    comp.pixels = queue;
    std::sort(comp.pixels.begin(), comp.pixels.end());
    out.push_back(std::move(comp));
  }
  return out;
}

namespace {

void check_map(const PixelMap& m) {
  const std::size_t n = static_cast<std::size_t>(m.height) * m.width;
  if (m.scores.size() != n || m.mask.size() != n) {
    throw ConfigError("pixel map extents do not match its score/mask buffers");
  }
}

}  // namespace

double pixel_auroc(std::span<const PixelMap> maps) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& m : maps) {
    check_map(m);
    scores.insert(scores.end(), m.scores.begin(), m.scores.end());
    for (auto v : m.mask) labels.push_back(v ? 1 : 0);
  }
  return auroc(scores, labels);
}

ProCurve pro_curve(std::span<const PixelMap> maps, std::size_t max_thresholds) {
  if (max_thresholds < 2) throw ConfigError("pro_curve needs at least 2 thresholds");
  std::vector<float> scores;
  std::vector<int> owner;  // component id, or -1 for a normal pixel
  std::vector<double> inv_size;
  std::size_t normal_pixels = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& m = maps[i];
    check_map(m);
    std::vector<int> local(m.mask.size(), -1);
    for (auto& c : connected_components(m.mask, m.height, m.width, static_cast<int>(i))) {
      const int id = static_cast<int>(inv_size.size());
      inv_size.push_back(1.0 / static_cast<double>(c.pixels.size()));
      for (int p : c.pixels) local[p] = id;
    }
    for (std::size_t p = 0; p < local.size(); ++p) {
      if (local[p] < 0) ++normal_pixels;
    }
    scores.insert(scores.end(), m.scores.begin(), m.scores.end());
    owner.insert(owner.end(), local.begin(), local.end());
  }
  if (inv_size.empty()) throw MetricError("PRO undefined: no ground-truth components");
  if (normal_pixels == 0) throw MetricError("PRO undefined: no anomaly-free pixels for the FPR");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Distinct scores in descending order.
  std::vector<float> unique;
  for (std::size_t idx : order) {
    if (unique.empty() || scores[idx] != unique.back()) unique.push_back(scores[idx]);
  }
  std::vector<float> thresholds;
  if (unique.size() <= max_thresholds) {
    thresholds = unique;
  } else {
    // Quantiles of the pooled score distribution, highest first.
    const std::size_t total = order.size();
    for (std::size_t j = 0; j < max_thresholds; ++j) {
      const std::size_t rank = j * (total - 1) / (max_thresholds - 1);
      const float t = scores[order[rank]];
      if (thresholds.empty() || t != thresholds.back()) thresholds.push_back(t);
    }
  }

  ProCurve curve;
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.fpr.push_back(0.0);
  curve.pro.push_back(0.0);
  const double components = static_cast<double>(inv_size.size());
  double coverage = 0.0;
  std::size_t false_pos = 0;
  std::size_t next = 0;
  for (float t : thresholds) {
    while (next < order.size() && scores[order[next]] >= t) {
      const int c = owner[order[next]];
      if (c < 0) {
        ++false_pos;
      } else {
        coverage += inv_size[c];
      }
      ++next;
    }
    curve.thresholds.push_back(t);
    curve.fpr.push_back(static_cast<double>(false_pos) / static_cast<double>(normal_pixels));
    curve.pro.push_back(std::min(1.0, coverage / components));
  }
  return curve;
}

double aupro(const ProCurve& curve, double fpr_limit) {
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw ConfigError("fpr_limit must lie in (0, 1]");
  if (curve.fpr.empty()) return 0.0;
  double area = 0.0;
  double prev_x = curve.fpr.front();
  double prev_y = curve.pro.front();
  for (std::size_t i = 1; i < curve.fpr.size() && prev_x < fpr_limit; ++i) {
    double x = curve.fpr[i];
    double y = curve.pro[i];
    if (x > fpr_limit) {
      y = prev_y + (y - prev_y) * (fpr_limit - prev_x) / (x - prev_x);
      x = fpr_limit;
    }
    area += (x - prev_x) * (y + prev_y) * 0.5;
    prev_x = x;
    prev_y = y;
  }
  if (prev_x < fpr_limit) area += (fpr_limit - prev_x) * prev_y;
  return area / fpr_limit;
}

}  // namespace mtfcdd
