#include "mtfcdd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

AugmentParams sample_augment(std::mt19937_64& rng, double p, int height, int width) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probability must lie in [0, 1]");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentParams a;
  if (!(unit(rng) < p)) return a;
  const double tx = kMaxTranslationPx * width / kTranslationReferenceSize;
  const double ty = kMaxTranslationPx * height / kTranslationReferenceSize;
  a.angle_deg = std::uniform_real_distribution<double>(-kMaxRotationDeg, kMaxRotationDeg)(rng);
  a.dx = std::uniform_real_distribution<double>(-tx, tx)(rng);
  a.dy = std::uniform_real_distribution<double>(-ty, ty)(rng);
  a.gain = std::uniform_real_distribution<double>(kMinContrastGain, kMaxContrastGain)(rng);
  a.offset = std::uniform_real_distribution<double>(-kMaxBrightnessOffset, kMaxBrightnessOffset)(rng);
  return a;
}

Image apply_augment(const Image& image, const AugmentParams& a) {
  const bool geometric = a.angle_deg != 0.0 || a.dx != 0.0 || a.dy != 0.0;
  const bool photometric = a.gain != 1.0 || a.offset != 0.0;
  if (!geometric && !photometric) return image;

  Image out = image;
  const int h = image.height;
  const int w = image.width;
  if (geometric) {
    const double t = a.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(t);
    const double s = std::sin(t);
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        // Inverse map: undo the translation, then the rotation.
        const double ux = x - a.dx - cx;
        const double uy = y - a.dy - cy;
        const double sx = std::clamp(c * ux + s * uy + cx, 0.0, static_cast<double>(w - 1));
        const double sy = std::clamp(-s * ux + c * uy + cy, 0.0, static_cast<double>(h - 1));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double fx = sx - x0;
        const double fy = sy - y0;
        for (int ch = 0; ch < image.channels; ++ch) {
          const double top = image.at(ch, y0, x0) * (1.0 - fx) + image.at(ch, y0, x1) * fx;
          const double bottom = image.at(ch, y1, x0) * (1.0 - fx) + image.at(ch, y1, x1) * fx;
          out.at(ch, y, x) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
        }
      }
    }
  }
  if (photometric) {
    const std::size_t plane = out.plane();
    for (int ch = 0; ch < out.channels; ++ch) {
      float* p = out.pixels.data() + ch * plane;
      double mean = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mean += p[i];
      mean /= static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        p[i] = static_cast<float>(std::clamp(a.gain * p[i] + (1.0 - a.gain) * mean + a.offset, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image augment(const Image& image, std::mt19937_64& rng, double p) {
  return apply_augment(image, sample_augment(rng, p, image.height, image.width));
}

}  // namespace mtfcdd
