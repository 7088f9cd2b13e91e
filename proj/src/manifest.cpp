#include "mtfcdd/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr DefectCode kVocabulary[] = {
    {"AK", "Pit"},     {"BX", "Deformation"},   {"CH", "Abrasion"},        {"HS", "Scratch"},
    {"PS", "Damage"},  {"QS", "Missing Parts"}, {"YW", "Foreign Objects"}, {"ZW", "Contamination"},
};

int class_index(const std::vector<std::string>& classes, const std::string& code, const std::string& where) {
  if (!find_defect_code(code)) throw DataError(where + ": unknown defect code '" + code + "'");
  auto it = std::find(classes.begin(), classes.end(), code);
  if (it == classes.end()) throw DataError(where + ": defect code '" + code + "' is not in the class list");
  return static_cast<int>(it - classes.begin());
}

Split parse_split(const std::string& s, const std::string& where) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw DataError(where + ": split must be 'train' or 'test', got '" + s + "'");
}

}  // namespace

std::span<const DefectCode> defect_vocabulary() { return kVocabulary; }

std::optional<DefectCode> find_defect_code(std::string_view code) {
  for (const auto& d : kVocabulary) {
    if (d.code == code) return d;
  }
  return std::nullopt;
}

std::string defect_display_name(std::string_view code) {
  auto d = find_defect_code(code);
  if (!d) return std::string(code);
  return std::string(d->name) + " (" + std::string(d->code) + ")";
}

std::string_view split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

bool SampleRecord::has_label(int k) const { return std::find(labels.begin(), labels.end(), k) != labels.end(); }

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == s) out.push_back(i);
  }
  return out;
}

LabelMatrix DatasetManifest::labels(std::span<const std::size_t> idx) const {
  LabelMatrix y = LabelMatrix::zeros(static_cast<int>(idx.size()), num_types());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (int k : records.at(idx[r]).labels) y.set(static_cast<int>(r), k, 1);
  }
  return y;
}

std::size_t DatasetManifest::anomalous_count(Split s) const {
  std::size_t n = 0;
  for (const auto& r : records) n += (r.split == s && !r.is_normal()) ? 1 : 0;
  return n;
}

void DatasetManifest::validate(bool check_files) const {
  if (records.empty()) throw DataError("manifest has no records");
  if (classes.empty()) throw DataError("manifest class list is empty");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (!find_defect_code(c)) throw DataError("unknown defect code '" + c + "' in class list");
    if (!seen.insert(c).second) throw DataError("duplicate defect code '" + c + "' in class list");
  }
  if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
    throw DataError("manifest image_size must be positive with 1 or 3 channels");
  }
  std::vector<int> test_hits(classes.size(), 0);
  for (const auto& r : records) {
    const std::string where = "record '" + r.image.string() + "'";
    if (r.split == Split::kTrain && r.labels.size() > 1) {
      throw DataError(where + ": training images must carry at most one anomaly type");
    }
    for (int k : r.labels) {
      if (k < 0 || k >= num_types()) throw DataError(where + ": label index out of range");
      if (r.split == Split::kTest) test_hits[k] += 1;
    }
    for (const auto& [k, mask] : r.masks) {
      if (!r.has_label(k)) throw DataError(where + ": mask given for a type the image is not labelled with");
      if (check_files && !fs::exists(mask)) throw DataError(where + ": mask file '" + mask.string() + "' not found");
    }
    if (check_files && !fs::exists(r.image)) throw DataError("image file '" + r.image.string() + "' not found");
  }
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (test_hits[k] == 0) throw DataError("class '" + classes[k] + "' has no test record");
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  const fs::path root = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : root / p; };
  DatasetManifest m;
  try {
    const int version = j.at("version").get<int>();
    if (version != kManifestVersion) {
      throw DataError("manifest schema version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kManifestVersion) + ")");
    }
    m.classes = j.at("classes").get<std::vector<std::string>>();
    const auto& size = j.at("image_size");
    m.height = size.at("height").get<int>();
    m.width = size.at("width").get<int>();
    m.channels = size.value("channels", 1);
    m.alpha = j.value("alpha", 0.0);
    for (const auto& jr : j.at("records")) {
      SampleRecord r;
      r.image = resolve(jr.at("image").get<std::string>());
      const std::string where = "record '" + r.image.string() + "'";
      r.split = parse_split(jr.at("split").get<std::string>(), where);
      r.category = jr.value("category", "");
      std::vector<std::string> codes;
      if (jr.contains("labels")) codes = jr.at("labels").get<std::vector<std::string>>();
      if (jr.contains("label")) codes.push_back(jr.at("label").get<std::string>());
      for (const auto& c : codes) {
        if (c == kNormalCode) continue;
        const int k = class_index(m.classes, c, where);
        if (!r.has_label(k)) r.labels.push_back(k);
      }
      if (jr.contains("masks")) {
        for (const auto& [code, mp] : jr.at("masks").items()) {
          if (mp.is_null()) continue;
          r.masks[class_index(m.classes, code, where)] = resolve(mp.get<std::string>());
        }
      }
      if (jr.contains("mask") && !jr.at("mask").is_null()) {
        if (r.labels.size() != 1) throw DataError(where + ": a single 'mask' needs exactly one label");
        r.masks[r.labels.front()] = resolve(jr.at("mask").get<std::string>());
      }
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError("manifest '" + path.string() + "' is missing a field: " + e.what());
  }
  m.validate(true);
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  const fs::path root = path.parent_path();
  auto rel = [&](const fs::path& p) {
    std::error_code ec;
    auto r = fs::relative(p, root.empty() ? fs::path(".") : root, ec);
    return (ec || r.empty()) ? p.generic_string() : r.generic_string();
  };
  json j;
  j["schema"] = "mtfcdd-manifest";
  j["version"] = kManifestVersion;
  j["image_size"] = {{"height", m.height}, {"width", m.width}, {"channels", m.channels}};
  j["alpha"] = m.alpha;
  j["classes"] = m.classes;
  json records = json::array();
  for (const auto& r : m.records) {
    json jr;
    jr["image"] = rel(r.image);
    json labels = json::array();
    for (int k : r.labels) labels.push_back(m.classes[k]);
    jr["labels"] = labels;
    json masks = json::object();
    for (const auto& [k, p] : r.masks) masks[m.classes[k]] = rel(p);
    jr["masks"] = masks;
    jr["split"] = split_name(r.split);
    jr["category"] = r.category;
    records.push_back(std::move(jr));
  }
  j["records"] = std::move(records);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

DatasetManifest convert_realiad(std::span<const fs::path> json_files, const fs::path& image_root, int height,
                                int width, int channels) {
  DatasetManifest m;
  m.height = height;
  m.width = width;
  m.channels = channels;
  std::vector<SampleRecord> pending;
  std::vector<std::vector<std::string>> pending_codes;
  std::vector<std::string> pending_mask;
  std::set<std::string> used;
  for (const auto& file : json_files) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open Real-IAD json '" + file.string() + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DataError("'" + file.string() + "' is not valid JSON: " + e.what());
    }
    for (Split split : {Split::kTrain, Split::kTest}) {
      const std::string key(split_name(split));
      if (!j.contains(key)) continue;
      for (const auto& e : j.at(key)) {
        SampleRecord r;
        r.split = split;
        r.image = image_root / e.at("image_path").get<std::string>();
        r.category = e.value("category", "");
        std::string code = e.value("anomaly_class", std::string(kNormalCode));
        if (code == "OK") code = kNormalCode;
        std::vector<std::string> codes;
        if (code != kNormalCode) {
          if (!find_defect_code(code)) throw DataError("'" + file.string() + "': unknown defect code '" + code + "'");
          codes.push_back(code);
          used.insert(code);
        }
        std::string mask;
        if (e.contains("mask_path") && e.at("mask_path").is_string()) mask = e.at("mask_path").get<std::string>();
        pending.push_back(std::move(r));
        pending_codes.push_back(std::move(codes));
        pending_mask.push_back(std::move(mask));
      }
    }
  }
  // Classes follow the vocabulary order, restricted to codes that occur.
  for (const auto& d : kVocabulary) {
    if (used.count(std::string(d.code))) m.classes.emplace_back(d.code);
  }
  for (std::size_t i = 0; i < pending.size(); ++i) {
    SampleRecord r = std::move(pending[i]);
    for (const auto& c : pending_codes[i]) {
      const int k = class_index(m.classes, c, "record '" + r.image.string() + "'");
      r.labels.push_back(k);
      if (!pending_mask[i].empty() && r.split == Split::kTest) r.masks[k] = image_root / pending_mask[i];
    }
    m.records.push_back(std::move(r));
  }
  m.validate(false);
  return m;
}

}  // namespace mtfcdd
