#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mtfcdd {

// Planar (channel, row, col) image with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

// Reads an 8/16-bit grayscale or RGB PNG (alpha is dropped, palettes expanded).
// Throws DataError naming the path on failure.
Image read_png(const std::filesystem::path& path);

// Writes 8-bit grayscale (1 channel) or RGB (3 channels); values are clamped
// to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);

// Binary mask: 1 where any channel is non-zero.
std::vector<std::uint8_t> read_mask_png(const std::filesystem::path& path, int& height, int& width);
void write_mask_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask, int height, int width);

}  // namespace mtfcdd
