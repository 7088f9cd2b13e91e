#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtfcdd/image_io.hpp"
#include "mtfcdd/manifest.hpp"

namespace mtfcdd {

inline constexpr int kMaxSyntheticTypes = 4;

// Defect families in channel order: pit (dark disc), scratch (bright thin
// polyline), missing part (region erased to background), contamination
// (low-contrast blob). A dataset with M types uses the first M.
inline constexpr std::array<std::string_view, kMaxSyntheticTypes> kSyntheticCodes = {"AK", "HS", "QS", "ZW"};

struct SyntheticConfig {
  int image_size = 64;
  int num_types = 3;
  int normal_count = 400;     // split between train and test
  int per_type_count = 100;   // anomalous images per type, split between train and test
  double alpha = 0.2;         // anomalous fraction of the training split
  double test_normal_fraction = 0.3;
  int composites = 0;         // two-defect test images written to composites.json
  std::uint64_t seed = 7;

  // Throws ConfigError when the fields or the counts are incompatible with alpha.
  void validate() const;
};

// Image counts implied by a config.
struct SyntheticSplit {
  int train_normal = 0;
  int test_normal = 0;
  std::vector<int> train_anomalous;  // per type
  std::vector<int> test_anomalous;   // per type

  int train_total() const;
  double achieved_alpha() const;
};
SyntheticSplit plan_synthetic_split(const SyntheticConfig& config);

struct RenderedSample {
  Image image;                               // 1 channel, values quantized to 8 bits
  std::vector<int> types;                    // defect family per mask
  std::vector<std::vector<std::uint8_t>> masks;  // one single-component mask per defect
};

// Renders a textured object with one defect per entry of `types` (families
// must be distinct and < kMaxSyntheticTypes). Deterministic in `seed`.
RenderedSample render_sample(int size, std::span<const int> types, std::uint64_t seed);

struct SyntheticResult {
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path composites_path;  // empty without composites
  SyntheticSplit split;
  // "<split>/<code or NORMAL>" -> image count.
  std::map<std::string, int> histogram;
};

// Writes PNGs plus manifest.json (and composites.json) under out_dir.
SyntheticResult generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out_dir);

}  // namespace mtfcdd
