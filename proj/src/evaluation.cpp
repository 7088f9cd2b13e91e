#include "mtfcdd/evaluation.hpp"

#include <cstdio>

#include <json.hpp>

#include "mtfcdd/error.hpp"
#include "mtfcdd/manifest.hpp"
#include "mtfcdd/metrics.hpp"

namespace mtfcdd {

std::span<const float> ScoredSplit::channel(std::size_t image, int k) const {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  return std::span<const float>(heatmaps.at(image)).subspan(static_cast<std::size_t>(k) * plane, plane);
}

ScoredSplit score_split(Model<float>& model, const LoadedSplit& data, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  ScoredSplit out;
  out.num_types = model.config().num_types;
  out.height = data.height;
  out.width = data.width;
  out.scores.resize(data.size() * out.num_types);
  out.heatmaps.resize(data.size());
  const std::size_t plane = static_cast<std::size_t>(data.height) * data.width;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(batch_size));
    const std::span<const Image> chunk(data.images.data() + begin, end - begin);
    auto net = model.forward(to_batch_tensor(chunk), BnMode::kEval);
    const Var<float> scores = anomaly_scores(net.heatmaps);
    const Tensor<float>& z = scores.value();
    net = model.upsample_output(net, data.height, data.width);
    const Tensor<float>& up = net.upsampled.value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      for (int k = 0; k < out.num_types; ++k) {
        out.scores[(begin + i) * out.num_types + k] = z[i * out.num_types + k];
      }
      const float* src = up.data() + i * out.num_types * plane;
      out.heatmaps[begin + i].assign(src, src + out.num_types * plane);
    }
  }
  return out;
}

EvaluationReport evaluate(const ScoredSplit& scored, const LoadedSplit& data, const std::vector<std::string>& classes,
                          const EvalConfig& config) {
  const int m = scored.num_types;
  if (static_cast<int>(classes.size()) != m || scored.size() != data.size()) {
    throw ConfigError("evaluate: scores, split and class list disagree");
  }
  EvaluationReport rep;
  rep.fpr_limit = config.fpr_limit;
  const ImageAurocReport image = image_level_auroc(scored.scores, data.labels);
  const std::size_t plane = static_cast<std::size_t>(scored.height) * scored.width;
  const std::vector<std::uint8_t> empty_mask(plane, 0);

  std::vector<PixelMap> pooled;
  double sum_p = 0.0;
  double sum_pro = 0.0;
  int n_pixel = 0;
  double sum_i = 0.0;
  int n_image = 0;
  for (int k = 0; k < m; ++k) {
    ClassMetrics c;
    c.code = classes[k];
    c.display = defect_display_name(classes[k]);
    c.i_auroc = image.per_class[k];
    if (c.i_auroc) {
      sum_i += *c.i_auroc;
      ++n_image;
    }
    std::vector<PixelMap> maps;
    bool missing = false;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const bool normal = data.labels.is_normal(static_cast<int>(i));
      const bool positive = data.labels.at(static_cast<int>(i), k) != 0;
      if (!normal && !positive) continue;
      const auto& mask = normal ? empty_mask : data.masks[i][k];
      if (mask.empty()) {
        missing = true;
        break;
      }
      maps.push_back({scored.channel(i, k), mask, scored.height, scored.width});
    }
    if (missing) {
      rep.warnings.push_back("class " + c.code + ": masks missing, P-AUROC and AUPRO skipped");
    } else {
      try {
        c.p_auroc = pixel_auroc(maps);
        c.aupro = aupro(pro_curve(maps, config.thresholds), config.fpr_limit);
        sum_p += *c.p_auroc;
        sum_pro += *c.aupro;
        ++n_pixel;
        pooled.insert(pooled.end(), maps.begin(), maps.end());
      } catch (const MetricError& e) {
        rep.warnings.push_back("class " + c.code + ": " + e.what());
      }
    }
    rep.classes.push_back(std::move(c));
  }
  if (n_image > 0) rep.mean_i_auroc = sum_i / n_image;
  if (n_pixel > 0) {
    rep.mean_p_auroc = sum_p / n_pixel;
    rep.mean_aupro = sum_pro / n_pixel;
    rep.pooled_p_auroc = pixel_auroc(pooled);
  }
  return rep;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "     -";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%6.1f", *v * 100.0);
  return buf;
}

}  // namespace

std::string format_report(const EvaluationReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s\n", "Class", "I-AUROC", "P-AUROC", "AUPRO");
  out += line;
  for (const auto& c : r.classes) {
    std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s\n", c.display.c_str(), cell(c.i_auroc).c_str(),
                  cell(c.p_auroc).c_str(), cell(c.aupro).c_str());
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s\n", "Mean", cell(r.mean_i_auroc).c_str(),
                cell(r.mean_p_auroc).c_str(), cell(r.mean_aupro).c_str());
  out += line;
  if (r.pooled_p_auroc) {
    std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s\n", "Pooled pixels", "", cell(r.pooled_p_auroc).c_str(), "");
    out += line;
  }
  for (const auto& w : r.warnings) out += "warning: " + w + "\n";
  return out;
}

std::string report_to_json(const EvaluationReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["fpr_limit"] = r.fpr_limit;
  json rows = json::array();
  for (const auto& c : r.classes) {
    rows.push_back({{"code", c.code},
                    {"name", c.display},
                    {"i_auroc", opt(c.i_auroc)},
                    {"p_auroc", opt(c.p_auroc)},
                    {"aupro", opt(c.aupro)}});
  }
  j["classes"] = std::move(rows);
  j["mean"] = {{"i_auroc", opt(r.mean_i_auroc)}, {"p_auroc", opt(r.mean_p_auroc)}, {"aupro", opt(r.mean_aupro)}};
  j["pooled_p_auroc"] = opt(r.pooled_p_auroc);
  j["warnings"] = r.warnings;
  return j.dump(2);
}

}  // namespace mtfcdd
