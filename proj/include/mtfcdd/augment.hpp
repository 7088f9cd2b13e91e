#pragma once

#include <random>

#include "mtfcdd/image_io.hpp"

namespace mtfcdd {

inline constexpr double kMaxRotationDeg = 15.0;
// Translation bound in pixels at the reference resolution; scaled by
// image width / kTranslationReferenceSize for other sizes.
inline constexpr double kMaxTranslationPx = 20.0;
inline constexpr double kTranslationReferenceSize = 256.0;
inline constexpr double kMaxBrightnessOffset = 0.1;
inline constexpr double kMinContrastGain = 0.8;
inline constexpr double kMaxContrastGain = 1.2;

struct AugmentParams {
  double angle_deg = 0.0;
  double dx = 0.0;  // pixels, positive moves content right
  double dy = 0.0;  // pixels, positive moves content down
  double gain = 1.0;
  double offset = 0.0;
};

// Draws the trigger and, when it fires, all transform parameters.
// Returns identity parameters otherwise.
AugmentParams sample_augment(std::mt19937_64& rng, double p, int height, int width);

// Rotation about the image centre and translation (bilinear, edge
// replication), then v' = gain * v + (1 - gain) * mean + offset per channel,
// clamped to [0, 1]. Identity parameters return the input unchanged.
Image apply_augment(const Image& image, const AugmentParams& params);

Image augment(const Image& image, std::mt19937_64& rng, double p = 0.5);

}  // namespace mtfcdd
