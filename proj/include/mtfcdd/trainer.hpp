#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mtfcdd/batches.hpp"
#include "mtfcdd/checkpoint.hpp"
#include "mtfcdd/config.hpp"
#include "mtfcdd/evaluation.hpp"
#include "mtfcdd/manifest.hpp"

namespace mtfcdd {

// Mean loss over one window of log_every iterations (shorter at epoch end).
struct LossWindow {
  std::uint64_t epoch = 0;
  std::uint64_t first_iteration = 0;
  std::uint64_t iterations = 0;
  double mean_loss = 0.0;
};

// Epochs to run and what they cost. Balanced runs use config.training.epochs
// balanced epochs. The unbalanced arm runs plain shuffled epochs, as many as
// round(total balanced draws / training-set size), so both arms see about the
// same number of images.
struct TrainingPlan {
  bool balanced = true;
  std::uint64_t epochs = 0;
  std::vector<std::uint64_t> draws_per_epoch;
  std::uint64_t balanced_draws = 0;  // budget of the balanced schedule
  std::size_t train_images = 0;
};
TrainingPlan plan_training(const RunConfig& config, const LabelMatrix& train_labels);

// Resolves num_types/height/width/channels against the manifest. Throws
// ConfigError when num_types disagrees with the manifest's class list.
RunConfig resolve_config(RunConfig config, const DatasetManifest& manifest);

struct TrainOptions {
  std::filesystem::path out_dir;  // checkpoints; empty disables writing
  std::optional<std::filesystem::path> resume;
  std::ostream* log = nullptr;
  // Stop after this many epochs in this call (for resume tests); 0 = plan.
  std::uint64_t max_epochs_this_call = 0;
};

struct TrainResult {
  Model<float> model;
  CheckpointState state;
  TrainingPlan plan;
  std::vector<LossWindow> loss_log;
  std::optional<EvaluationReport> final_report;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
};

// Throws DataError when the training split has no anomalous image: the
// objective needs labelled anomalies next to the normal data.
TrainResult train(const RunConfig& config, const DatasetManifest& manifest, const TrainOptions& options);

}  // namespace mtfcdd
