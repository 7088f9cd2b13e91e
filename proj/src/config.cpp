#include "mtfcdd/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

using nlohmann::json;

void RunConfig::validate() const {
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (optimizer.batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
  if (training.epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (!(training.augment_p >= 0.0 && training.augment_p <= 1.0)) throw ConfigError("training.augment_p must lie in [0, 1]");
  if (training.log_every < 1) throw ConfigError("training.log_every must be >= 1");
  if (!(eval.fpr_limit > 0.0 && eval.fpr_limit <= 1.0)) throw ConfigError("eval.fpr_limit must lie in (0, 1]");
  if (eval.thresholds < 2) throw ConfigError("eval.thresholds must be >= 2");
  if (model.num_types < 0) throw ConfigError("model.num_types must be >= 0");
  ModelConfig probe = model;
  if (probe.num_types == 0) probe.num_types = 1;
  probe.validate();
}

namespace {

void reject_unknown(const json& j, std::string_view section, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError("config section '" + std::string(section) + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known) throw ConfigError("unknown config key '" + std::string(section) + "." + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"num_types", c.model.num_types},
                {"backbone_stages", c.model.backbone_stages},
                {"head_blocks", c.model.head_blocks},
                {"head_filters", c.model.head_filters},
                {"head_bias", c.model.head_bias}};
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"batch_size", c.optimizer.batch_size}};
  j["training"] = {{"balanced", c.training.balanced},
                   {"epochs", c.training.epochs},
                   {"seed", c.training.seed},
                   {"augment_p", c.training.augment_p},
                   {"log_every", c.training.log_every},
                   {"evaluate_each_epoch", c.training.evaluate_each_epoch}};
  j["data"] = {{"manifest", c.manifest.generic_string()}};
  j["eval"] = {{"fpr_limit", c.eval.fpr_limit}, {"thresholds", c.eval.thresholds}};
  return j.dump(2);
}

RunConfig run_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    reject_unknown(j, "", {"model", "optimizer", "training", "data", "eval"});
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, "model", {"num_types", "backbone_stages", "head_blocks", "head_filters", "head_bias"});
      read(m, "num_types", c.model.num_types);
      read(m, "backbone_stages", c.model.backbone_stages);
      read(m, "head_blocks", c.model.head_blocks);
      read(m, "head_filters", c.model.head_filters);
      read(m, "head_bias", c.model.head_bias);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      reject_unknown(o, "optimizer", {"lr", "beta1", "beta2", "batch_size"});
      read(o, "lr", c.optimizer.lr);
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "batch_size", c.optimizer.batch_size);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      reject_unknown(t, "training", {"balanced", "epochs", "seed", "augment_p", "log_every", "evaluate_each_epoch"});
      read(t, "balanced", c.training.balanced);
      read(t, "epochs", c.training.epochs);
      read(t, "seed", c.training.seed);
      read(t, "augment_p", c.training.augment_p);
      read(t, "log_every", c.training.log_every);
      read(t, "evaluate_each_epoch", c.training.evaluate_each_epoch);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown(d, "data", {"manifest"});
      if (d.contains("manifest")) c.manifest = d.at("manifest").get<std::string>();
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      reject_unknown(e, "eval", {"fpr_limit", "thresholds"});
      read(e, "fpr_limit", c.eval.fpr_limit);
      read(e, "thresholds", c.eval.thresholds);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  c.model.seed = c.training.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = run_config_from_json(ss.str());
  if (!c.manifest.empty() && c.manifest.is_relative()) c.manifest = path.parent_path() / c.manifest;
  return c;
}

}  // namespace mtfcdd
