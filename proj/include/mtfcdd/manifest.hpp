#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtfcdd/loss.hpp"

namespace mtfcdd {

inline constexpr int kManifestVersion = 1;
inline constexpr std::string_view kNormalCode = "NORMAL";

// Real-IAD defect vocabulary.
struct DefectCode {
  std::string_view code;
  std::string_view name;
};
std::span<const DefectCode> defect_vocabulary();
std::optional<DefectCode> find_defect_code(std::string_view code);
// "Pit (AK)" style row label.
std::string defect_display_name(std::string_view code);

enum class Split { kTrain, kTest };
std::string_view split_name(Split s);

struct SampleRecord {
  std::filesystem::path image;
  std::vector<int> labels;             // indices into DatasetManifest::classes
  std::map<int, std::filesystem::path> masks;  // class index -> mask (evaluation only)
  std::string category;
  Split split = Split::kTrain;

  bool is_normal() const { return labels.empty(); }
  bool has_label(int k) const;
};

struct DatasetManifest {
  std::vector<std::string> classes;  // defect codes, one per output channel
  int height = 0;
  int width = 0;
  int channels = 1;
  double alpha = 0.0;
  std::vector<SampleRecord> records;

  int num_types() const { return static_cast<int>(classes.size()); }
  std::vector<std::size_t> indices(Split s) const;
  LabelMatrix labels(std::span<const std::size_t> indices) const;
  std::size_t anomalous_count(Split s) const;

  // Throws DataError on any broken invariant; with check_files, also on
  // image or mask paths that do not exist.
  void validate(bool check_files) const;
};

// Loads and validates a manifest; relative paths resolve against the
// manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes paths relative to the manifest's directory when possible.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Builds a manifest from Real-IAD per-object JSON files ({"train": [...],
// "test": [...]} entries with image_path, anomaly_class, mask_path,
// category). "OK" maps to normal.
DatasetManifest convert_realiad(std::span<const std::filesystem::path> json_files,
                                const std::filesystem::path& image_root, int height, int width, int channels);

}  // namespace mtfcdd
