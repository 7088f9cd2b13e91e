#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mtfcdd/image_io.hpp"
#include "mtfcdd/model.hpp"

namespace mtfcdd {

struct InferenceResult {
  std::filesystem::path image;
  std::vector<double> scores;  // z_k per class
  std::vector<float> heatmap_min;  // raw upsampled range per class
  std::vector<float> heatmap_max;
  std::vector<std::filesystem::path> heatmaps;  // one PNG per class
  std::vector<std::filesystem::path> overlays;  // one PNG per class
  std::filesystem::path sidecar;
};

// Bilinear resize (half-pixel centres).
Image resize_image(const Image& image, int height, int width);

// For each image writes, per class code, heatmaps/<stem>_<code>.png
// (min-max normalized per channel), overlays/<stem>_<code>.png and a
// scores/<stem>.txt sidecar with z and the raw heatmap ranges. Without
// `resize`, a size mismatch throws DataError.
std::vector<InferenceResult> run_inference(Model<float>& model, const std::vector<std::string>& classes,
                                           const std::vector<std::filesystem::path>& images,
                                           const std::filesystem::path& out_dir, bool resize);

}  // namespace mtfcdd
