#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtfcdd/config.hpp"
#include "mtfcdd/model.hpp"

namespace mtfcdd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct EpochMetrics {
  std::uint64_t epoch = 0;  // 1-based, in the run's epoch unit
  std::uint64_t iterations = 0;  // cumulative optimizer steps
  double train_loss = 0.0;       // mean batch loss over the epoch
  double std_epochs = 0.0;       // cumulative images drawn / training-set size
  std::optional<double> mean_i_auroc;
  std::optional<double> mean_p_auroc;
  std::optional<double> mean_aupro;
};

struct CheckpointState {
  RunConfig config;      // with model fields resolved against the manifest
  std::vector<std::string> classes;  // defect code per output channel
  std::uint64_t epoch = 0;       // completed epochs
  std::uint64_t iterations = 0;  // completed optimizer steps
  std::vector<EpochMetrics> history;
};

// Layout is documented in docs/formats.md. Writes to a temporary file and
// renames it into place.
void save_checkpoint(const std::filesystem::path& path, const CheckpointState& state, Model<float>& model);

struct LoadedCheckpoint {
  CheckpointState state;
  Model<float> model;
};

// Throws DataError on a bad magic, unsupported version, truncated file, or
// tensors that do not match the configured model.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mtfcdd
