#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mtfcdd/metrics.hpp"
#include "mtfcdd/model.hpp"

namespace mtfcdd {

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 32;
};

struct TrainingConfig {
  bool balanced = true;
  int epochs = 5;  // balanced epochs; the unbalanced arm gets the same image budget
  std::uint64_t seed = 1;
  double augment_p = 0.5;
  int log_every = 10;  // iterations per logged loss window
  bool evaluate_each_epoch = true;
};

struct EvalConfig {
  double fpr_limit = kDefaultFprLimit;
  std::size_t thresholds = kDefaultMaxThresholds;
};

// model.num_types == 0 means "take M from the manifest"; model.height/width
// and channels are always taken from the manifest. model.seed follows
// training.seed.
struct RunConfig {
  ModelConfig model{.num_types = 0};
  OptimizerConfig optimizer;
  TrainingConfig training;
  std::filesystem::path manifest;
  EvalConfig eval;

  // Throws ConfigError: lr > 0, epochs >= 1, fpr_limit in (0, 1], ...
  void validate() const;
};

// JSON text; unknown keys are rejected so typos do not pass silently.
std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(std::string_view text);
// Relative manifest paths resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mtfcdd
