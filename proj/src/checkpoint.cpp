#include "mtfcdd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'T', 'F', 'C', 'D', 'D', '\0', '\0'};

enum class TensorKind : std::uint8_t { kParam = 0, kAdamM = 1, kAdamV = 2, kBnMean = 3, kBnVar = 4 };

struct Writer {
  std::ofstream out;
  template <typename T>
  void put(const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, TensorKind kind, const Tensor<float>& t) {
    string(name);
    put(static_cast<std::uint8_t>(kind));
    put(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put(static_cast<std::int32_t>(d));
    bytes(t.data(), t.size() * sizeof(float));
  }
};

struct Reader {
  std::ifstream in;
  std::string path;
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw DataError("checkpoint '" + path + "' is truncated");
  }
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  std::string string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 30)) throw DataError("checkpoint '" + path + "' has a corrupt length field");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

json metrics_to_json(const EpochMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"epoch", m.epoch},
          {"iterations", m.iterations},
          {"train_loss", m.train_loss},
          {"std_epochs", m.std_epochs},
          {"mean_i_auroc", opt(m.mean_i_auroc)},
          {"mean_p_auroc", opt(m.mean_p_auroc)},
          {"mean_aupro", opt(m.mean_aupro)}};
}

EpochMetrics metrics_from_json(const json& j) {
  auto opt = [&](const char* k) -> std::optional<double> {
    if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<double>();
  };
  EpochMetrics m;
  m.epoch = j.at("epoch").get<std::uint64_t>();
  m.iterations = j.at("iterations").get<std::uint64_t>();
  m.train_loss = j.at("train_loss").get<double>();
  m.std_epochs = j.at("std_epochs").get<double>();
  m.mean_i_auroc = opt("mean_i_auroc");
  m.mean_p_auroc = opt("mean_p_auroc");
  m.mean_aupro = opt("mean_aupro");
  return m;
}

}  // namespace

void save_checkpoint(const fs::path& path, const CheckpointState& state, Model<float>& model) {
  json meta;
  meta["format"] = "mtfcdd-checkpoint";
  meta["config"] = json::parse(run_config_to_json(state.config));
  meta["model"] = {{"num_types", model.config().num_types},
                   {"height", model.config().height},
                   {"width", model.config().width},
                   {"channels", model.config().channels},
                   {"seed", model.config().seed}};
  meta["classes"] = state.classes;
  meta["epoch"] = state.epoch;
  meta["iterations"] = state.iterations;
  json history = json::array();
  for (const auto& h : state.history) history.push_back(metrics_to_json(h));
  meta["history"] = std::move(history);
  json steps = json::object();
  for (const auto* p : model.parameters()) steps[p->name] = p->step;
  meta["adam_steps"] = std::move(steps);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    Writer w{std::ofstream(tmp, std::ios::binary)};
    if (!w.out) throw DataError("cannot write checkpoint '" + tmp.string() + "'");
    w.bytes(kMagic, sizeof(kMagic));
    w.put(kCheckpointVersion);
    const std::string text = meta.dump();
    w.put(static_cast<std::uint64_t>(text.size()));
    w.bytes(text.data(), text.size());

    std::uint32_t count = 0;
    for (const auto* p : model.parameters()) count += 1 + (p->first_moment.empty() ? 0 : 2);
    count += 2 * static_cast<std::uint32_t>(model.batch_norm_stats().size());
    w.put(count);
    for (const auto* p : model.parameters()) {
      w.tensor(p->name, TensorKind::kParam, p->value());
      if (!p->first_moment.empty()) {
        w.tensor(p->name, TensorKind::kAdamM, p->first_moment);
        w.tensor(p->name, TensorKind::kAdamV, p->second_moment);
      }
    }
    for (const auto& s : model.batch_norm_stats()) {
      w.tensor(s.name, TensorKind::kBnMean, s.stats->mean);
      w.tensor(s.name, TensorKind::kBnVar, s.stats->var);
    }
    w.out.flush();
    if (!w.out) throw DataError("failed writing checkpoint '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  Reader r{std::ifstream(path, std::ios::binary), path.string()};
  if (!r.in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("'" + path.string() + "' is not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint '" + path.string() + "' has unsupported version " + std::to_string(version));
  }
  const auto meta_len = r.get<std::uint64_t>();
  if (meta_len > (1ull << 32)) throw DataError("checkpoint '" + path.string() + "' has a corrupt header");
  std::string text(meta_len, '\0');
  r.bytes(text.data(), text.size());

  CheckpointState state;
  ModelConfig mc;
  try {
    const json meta = json::parse(text);
    state.config = run_config_from_json(meta.at("config").dump());
    mc = state.config.model;
    const auto& jm = meta.at("model");
    mc.num_types = jm.at("num_types").get<int>();
    mc.height = jm.at("height").get<int>();
    mc.width = jm.at("width").get<int>();
    mc.channels = jm.at("channels").get<int>();
    mc.seed = jm.at("seed").get<std::uint64_t>();
    state.config.model = mc;
    state.classes = meta.at("classes").get<std::vector<std::string>>();
    if (static_cast<int>(state.classes.size()) != mc.num_types) {
      throw DataError("checkpoint '" + path.string() + "' lists " + std::to_string(state.classes.size()) +
                      " classes for " + std::to_string(mc.num_types) + " output channels");
    }
    state.epoch = meta.at("epoch").get<std::uint64_t>();
    state.iterations = meta.at("iterations").get<std::uint64_t>();
    for (const auto& h : meta.at("history")) state.history.push_back(metrics_from_json(h));
    LoadedCheckpoint out{std::move(state), Model<float>(mc)};
    for (auto* p : out.model.parameters()) {
      if (meta.at("adam_steps").contains(p->name)) p->step = meta.at("adam_steps").at(p->name).get<std::int64_t>();
    }

    std::map<std::pair<std::string, TensorKind>, Tensor<float>*> slots;
    for (auto* p : out.model.parameters()) {
      slots[{p->name, TensorKind::kParam}] = &p->mutable_value();
      slots[{p->name, TensorKind::kAdamM}] = &p->first_moment;
      slots[{p->name, TensorKind::kAdamV}] = &p->second_moment;
    }
    for (auto& s : out.model.batch_norm_stats()) {
      slots[{s.name, TensorKind::kBnMean}] = &s.stats->mean;
      slots[{s.name, TensorKind::kBnVar}] = &s.stats->var;
    }
    const auto count = r.get<std::uint32_t>();
    std::size_t params_seen = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string name = r.string();
      const auto kind = static_cast<TensorKind>(r.get<std::uint8_t>());
      const auto rank = r.get<std::uint32_t>();
      if (rank > 8) throw DataError("checkpoint tensor '" + name + "' has a corrupt rank");
      Shape shape(rank);
      for (auto& d : shape) d = r.get<std::int32_t>();
      auto it = slots.find({name, kind});
      if (it == slots.end()) throw DataError("checkpoint tensor '" + name + "' does not belong to the configured model");
      Tensor<float> t(shape);
      r.bytes(t.data(), t.size() * sizeof(float));
      Tensor<float>& dst = *it->second;
      const bool moment = kind == TensorKind::kAdamM || kind == TensorKind::kAdamV;
      if (!(moment && dst.empty()) && dst.shape() != shape) {
        throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                        shape_str(dst.shape()));
      }
      dst = std::move(t);
      params_seen += kind == TensorKind::kParam ? 1 : 0;
    }
    if (params_seen != out.model.parameters().size()) {
      throw DataError("checkpoint '" + path.string() + "' is missing parameters");
    }
    return out;
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' has corrupt metadata: " + e.what());
  }
}

}  // namespace mtfcdd
