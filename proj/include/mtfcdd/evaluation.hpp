#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtfcdd/batches.hpp"
#include "mtfcdd/config.hpp"
#include "mtfcdd/model.hpp"

namespace mtfcdd {

// Image scores and input-resolution heatmaps for every image of a split.
struct ScoredSplit {
  int num_types = 0;
  int height = 0;
  int width = 0;
  std::vector<double> scores;               // N x M, z_ik
  std::vector<std::vector<float>> heatmaps;  // per image, M x h x w

  std::size_t size() const { return heatmaps.size(); }
  std::span<const float> channel(std::size_t image, int k) const;
};

// Eval-mode forward pass in chunks of batch_size.
ScoredSplit score_split(Model<float>& model, const LoadedSplit& data, int batch_size);

struct ClassMetrics {
  std::string code;
  std::string display;  // "Pit (AK)"
  std::optional<double> i_auroc;
  std::optional<double> p_auroc;
  std::optional<double> aupro;
};

struct EvaluationReport {
  std::vector<ClassMetrics> classes;
  std::optional<double> mean_i_auroc;
  std::optional<double> mean_p_auroc;
  std::optional<double> mean_aupro;
  // Every class's pixel maps in one population; normal images count once per class.
  std::optional<double> pooled_p_auroc;
  double fpr_limit = kDefaultFprLimit;
  std::vector<std::string> warnings;
};

// Per class k, pixel metrics use channel k over the images that are normal
// or labelled k, with an all-zero mask for normal images. A class whose
// positive images lack masks gets no pixel metrics and a warning.
EvaluationReport evaluate(const ScoredSplit& scored, const LoadedSplit& data, const std::vector<std::string>& classes,
                          const EvalConfig& config);

// Fixed-width table: one row per class, then a Mean row.
std::string format_report(const EvaluationReport& report);
std::string report_to_json(const EvaluationReport& report);

}  // namespace mtfcdd
