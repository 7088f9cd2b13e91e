#include "mtfcdd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mtfcdd/batches.hpp"
#include "mtfcdd/error.hpp"
#include "mtfcdd/loss.hpp"

namespace mtfcdd {

namespace fs = std::filesystem;

Image resize_image(const Image& image, int height, int width) {
  if (height < 1 || width < 1) throw ConfigError("resize target must be positive");
  Image out(height, width, image.channels);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(c, y0, x0) * (1 - wx) + image.at(c, y0, x1) * wx;
        const double bot = image.at(c, y1, x0) * (1 - wx) + image.at(c, y1, x1) * wx;
        out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

std::vector<InferenceResult> run_inference(Model<float>& model, const std::vector<std::string>& classes,
                                           const std::vector<fs::path>& images, const fs::path& out_dir,
                                           bool resize) {
  const ModelConfig& mc = model.config();
  if (static_cast<int>(classes.size()) != mc.num_types) throw ConfigError("class list does not match the model");
  std::vector<InferenceResult> results;
  const std::size_t plane = static_cast<std::size_t>(mc.height) * mc.width;
  for (const auto& path : images) {
    Image img = read_png(path);
    if (img.height != mc.height || img.width != mc.width) {
      if (!resize) {
        throw DataError("image '" + path.string() + "' is " + std::to_string(img.height) + "x" +
                        std::to_string(img.width) + " but the model expects " + std::to_string(mc.height) + "x" +
                        std::to_string(mc.width) + "; pass --resize to rescale it");
      }
      img = resize_image(img, mc.height, mc.width);
    }
    if (img.channels != mc.channels) {
      throw DataError("image '" + path.string() + "' has " + std::to_string(img.channels) +
                      " channels, the model expects " + std::to_string(mc.channels));
    }
    auto net = model.forward(to_batch_tensor(std::span<const Image>(&img, 1)), BnMode::kEval);
    const Tensor<float> z = anomaly_scores(net.heatmaps).value();
    net = model.upsample_output(net, mc.height, mc.width);
    const Tensor<float>& up = net.upsampled.value();

    InferenceResult r;
    r.image = path;
    const std::string stem = path.stem().string();
    for (int k = 0; k < mc.num_types; ++k) {
      r.scores.push_back(z[static_cast<std::size_t>(k)]);
      const float* h = up.data() + k * plane;
      const auto [lo, hi] = std::minmax_element(h, h + plane);
      r.heatmap_min.push_back(*lo);
      r.heatmap_max.push_back(*hi);
      const float range = *hi - *lo;
      Image heat(mc.height, mc.width, 1);
      Image overlay(mc.height, mc.width, 3);
      for (std::size_t p = 0; p < plane; ++p) {
        const float v = range > 0.0f ? (h[p] - *lo) / range : 0.0f;
        heat.pixels[p] = v;
        float gray = 0.0f;
        for (int c = 0; c < img.channels; ++c) gray += img.pixels[c * plane + p];
        gray /= static_cast<float>(img.channels);
        const float a = 0.6f * v;
        overlay.pixels[p] = (1.0f - a) * gray + a;
        overlay.pixels[plane + p] = (1.0f - a) * gray;
        overlay.pixels[2 * plane + p] = (1.0f - a) * gray;
      }
      r.heatmaps.push_back(out_dir / "heatmaps" / (stem + "_" + classes[k] + ".png"));
      r.overlays.push_back(out_dir / "overlays" / (stem + "_" + classes[k] + ".png"));
      write_png(r.heatmaps.back(), heat);
      write_png(r.overlays.back(), overlay);
    }
    r.sidecar = out_dir / "scores" / (stem + ".txt");
    fs::create_directories(r.sidecar.parent_path());
    std::ofstream side(r.sidecar);
    if (!side) throw DataError("cannot write '" + r.sidecar.string() + "'");
    side << "# class z heatmap_min heatmap_max (PNG value v maps to min + v/255 * (max - min))\n";
    side.precision(9);
    for (int k = 0; k < mc.num_types; ++k) {
      side << classes[k] << ' ' << r.scores[k] << ' ' << r.heatmap_min[k] << ' ' << r.heatmap_max[k] << '\n';
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace mtfcdd
