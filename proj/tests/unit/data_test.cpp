#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "mtfcdd/augment.hpp"
#include "mtfcdd/batches.hpp"
#include "mtfcdd/error.hpp"
#include "mtfcdd/image_io.hpp"
#include "mtfcdd/manifest.hpp"
#include "mtfcdd/metrics.hpp"
#include "mtfcdd/sampler.hpp"
#include "mtfcdd/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace mtfcdd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& p, const json& j) {
  std::ofstream(p) << j.dump(2);
}

// Two classes, 2 train normals, 1 train AK, test: 1 normal, 1 AK, 1 HS.
json small_manifest(const fs::path& dir) {
  const Image img(8, 8, 1, 0.5f);
  const std::vector<std::uint8_t> mask(64, 1);
  for (const char* name : {"n0", "n1", "a0", "tn", "ta", "th"}) write_png(dir / (std::string(name) + ".png"), img);
  write_mask_png(dir / "ta_mask.png", mask, 8, 8);
  write_mask_png(dir / "th_mask.png", mask, 8, 8);
  return json{{"version", 1},
              {"classes", {"AK", "HS"}},
              {"image_size", {{"height", 8}, {"width", 8}, {"channels", 1}}},
              {"alpha", 0.33},
              {"records",
               {{{"image", "n0.png"}, {"split", "train"}, {"labels", json::array()}},
                {{"image", "n1.png"}, {"split", "train"}, {"label", "NORMAL"}},
                {{"image", "a0.png"}, {"split", "train"}, {"labels", {"AK"}}},
                {{"image", "tn.png"}, {"split", "test"}, {"labels", json::array()}},
                {{"image", "ta.png"}, {"split", "test"}, {"label", "AK"}, {"mask", "ta_mask.png"}},
                {{"image", "th.png"}, {"split", "test"}, {"labels", {"HS"}}, {"masks", {{"HS", "th_mask.png"}}}}}}};
}

template <typename F>
std::string data_error_text(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "<no DataError>";
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Manifest, LoadsAndResolvesRelativePaths) {
  testutil::TempDir dir("manifest_ok");
  write_json(dir / "m.json", small_manifest(dir));
  const auto m = load_manifest(dir / "m.json");
  EXPECT_EQ(m.num_types(), 2);
  EXPECT_EQ(m.indices(Split::kTrain).size(), 3u);
  EXPECT_EQ(m.indices(Split::kTest).size(), 3u);
  EXPECT_EQ(m.anomalous_count(Split::kTrain), 1u);
  EXPECT_EQ(m.records[4].masks.at(0), dir / "ta_mask.png");
  EXPECT_EQ(m.records[5].masks.at(1), dir / "th_mask.png");
  const auto y = m.labels(m.indices(Split::kTest));
  EXPECT_TRUE(y.is_normal(0));
  EXPECT_EQ(y.at(1, 0), 1);
  EXPECT_EQ(y.at(2, 1), 1);
}

TEST(Manifest, SaveRoundTrips) {
  testutil::TempDir dir("manifest_rt");
  write_json(dir / "m.json", small_manifest(dir));
  const auto a = load_manifest(dir / "m.json");
  save_manifest(a, dir / "copy.json");
  const auto b = load_manifest(dir / "copy.json");
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].image, b.records[i].image);
    EXPECT_EQ(a.records[i].labels, b.records[i].labels);
    EXPECT_EQ(a.records[i].masks, b.records[i].masks);
  }
  EXPECT_EQ(a.classes, b.classes);
}

TEST(Manifest, RejectsMultiLabelTrainingRecord) {
  testutil::TempDir dir("manifest_multi");
  auto j = small_manifest(dir);
  j["records"][2]["labels"] = {"AK", "HS"};
  write_json(dir / "m.json", j);
  EXPECT_NE(data_error_text([&] { load_manifest(dir / "m.json"); }).find("at most one anomaly type"),
            std::string::npos);
}

TEST(Manifest, ReportsMissingMaskPath) {
  testutil::TempDir dir("manifest_mask");
  auto j = small_manifest(dir);
  j["records"][4]["mask"] = "gone.png";
  write_json(dir / "m.json", j);
  EXPECT_NE(data_error_text([&] { load_manifest(dir / "m.json"); }).find("gone.png"), std::string::npos);
}

TEST(Manifest, RejectsUnknownCodesVersionsAndMissingTestClasses) {
  testutil::TempDir dir("manifest_bad");
  auto j = small_manifest(dir);
  j["classes"] = {"AK", "HS", "XX"};
  write_json(dir / "m.json", j);
  EXPECT_NE(data_error_text([&] { load_manifest(dir / "m.json"); }).find("XX"), std::string::npos);

  j = small_manifest(dir);
  j["version"] = 9;
  write_json(dir / "m.json", j);
  EXPECT_NE(data_error_text([&] { load_manifest(dir / "m.json"); }).find("version 9"), std::string::npos);

  j = small_manifest(dir);
  j["records"].erase(5);
  write_json(dir / "m.json", j);
  EXPECT_NE(data_error_text([&] { load_manifest(dir / "m.json"); }).find("'HS' has no test record"),
            std::string::npos);

  EXPECT_THROW(load_manifest(dir / "absent.json"), DataError);
}

TEST(Manifest, DefectVocabulary) {
  EXPECT_EQ(defect_vocabulary().size(), 8u);
  EXPECT_EQ(defect_display_name("QS"), "Missing Parts (QS)");
  EXPECT_FALSE(find_defect_code("OK").has_value());
}

TEST(RealIad, ConvertsAnnotationJson) {
  testutil::TempDir dir("realiad");
  write_json(dir / "audio.json",
             json{{"train",
                   {{{"image_path", "a/ok1.jpg"}, {"anomaly_class", "OK"}, {"category", "audiojack"}},
                    {{"image_path", "a/zw1.jpg"}, {"anomaly_class", "ZW"}, {"mask_path", "a/zw1.png"}}}},
                  {"test",
                   {{{"image_path", "a/ok2.jpg"}, {"anomaly_class", "OK"}},
                    {{"image_path", "a/ak2.jpg"}, {"anomaly_class", "AK"}, {"mask_path", "a/ak2.png"}},
                    {{"image_path", "a/zw2.jpg"}, {"anomaly_class", "ZW"}, {"mask_path", "a/zw2.png"}}}}});
  const fs::path files[] = {dir / "audio.json"};
  const auto m = convert_realiad(files, "/data/realiad", 256, 256, 3);
  EXPECT_EQ(m.classes, (std::vector<std::string>{"AK", "ZW"}));
  ASSERT_EQ(m.records.size(), 5u);
  EXPECT_TRUE(m.records[0].is_normal());
  EXPECT_EQ(m.records[0].category, "audiojack");
  EXPECT_EQ(m.records[1].labels, std::vector<int>{1});
  EXPECT_TRUE(m.records[1].masks.empty());  // training masks are not used
  EXPECT_EQ(m.records[3].masks.at(0), fs::path("/data/realiad/a/ak2.png"));

  write_json(dir / "bad.json", json{{"test", {{{"image_path", "x.jpg"}, {"anomaly_class", "QQ"}}}}});
  const fs::path bad[] = {dir / "bad.json"};
  EXPECT_THROW(convert_realiad(bad, dir, 8, 8, 1), DataError);
}

TEST(Synthetic, SplitArithmetic) {
  SyntheticConfig c;
  c.num_types = 3;
  c.normal_count = 200;
  c.per_type_count = 30;
  c.alpha = 0.1;
  const auto s = plan_synthetic_split(c);
  EXPECT_EQ(s.test_normal, 60);
  EXPECT_EQ(s.train_normal, 140);
  // 0.1 * 140 / 0.9 = 15.6 -> 16 anomalous training images.
  EXPECT_EQ(s.train_anomalous, (std::vector<int>{6, 5, 5}));
  EXPECT_EQ(s.test_anomalous, (std::vector<int>{24, 25, 25}));
  EXPECT_NEAR(s.achieved_alpha(), 16.0 / 156.0, 1e-15);
  c.alpha = 0.9;
  EXPECT_THROW(plan_synthetic_split(c), ConfigError);
}

TEST(Synthetic, RenderedDefectsAreSingleComponents) {
  for (int t = 0; t < kMaxSyntheticTypes; ++t) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const int types[] = {t};
      const auto r = render_sample(64, types, derive_seed(99, seed));
      ASSERT_EQ(r.masks.size(), 1u);
      EXPECT_EQ(connected_components(r.masks[0], 64, 64).size(), 1u) << kSyntheticCodes[t] << " " << seed;
      for (float v : r.image.pixels) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
        EXPECT_FLOAT_EQ(v * 255.0f, std::round(v * 255.0f));
      }
    }
  }
  const auto normal = render_sample(64, {}, 5);
  EXPECT_TRUE(normal.masks.empty());
}

TEST(Synthetic, DefectsChangeTheImageInsideTheirMask) {
  for (int t = 0; t < kMaxSyntheticTypes; ++t) {
    const int types[] = {t};
    const auto r = render_sample(64, types, 1234);
    const auto clean = render_sample(64, {}, 1234);
    double inside = 0.0;
    for (std::size_t p = 0; p < r.masks[0].size(); ++p) {
      if (r.masks[0][p]) inside += std::abs(r.image.pixels[p] - clean.image.pixels[p]);
    }
    EXPECT_GT(inside, 0.0) << kSyntheticCodes[t];
  }
}

TEST(Synthetic, GeneratesDatasetDeterministically) {
  testutil::TempDir a("synth_a"), b("synth_b");
  SyntheticConfig c;
  c.num_types = 3;
  c.normal_count = 40;
  c.per_type_count = 6;
  c.alpha = 0.1;
  c.image_size = 32;
  c.composites = 3;
  const auto ra = generate_synthetic(c, a.path());
  generate_synthetic(c, b.path());
  const auto& m = ra.manifest;
  EXPECT_EQ(m.records.size(), 40u + 18u);
  EXPECT_EQ(ra.histogram.at("train/NORMAL"), 28);
  EXPECT_EQ(ra.histogram.at("test/NORMAL"), 12);
  EXPECT_EQ(ra.histogram.at("composite"), 3);
  for (const auto& r : m.records) {
    const auto rel = fs::relative(r.image, a.path());
    EXPECT_EQ(file_bytes(r.image), file_bytes(b / rel)) << rel;
    if (r.split == Split::kTrain || r.is_normal()) {
      EXPECT_TRUE(r.masks.empty());
    } else {
      ASSERT_EQ(r.masks.size(), 1u);
      int h = 0, w = 0;
      const auto mask = read_mask_png(r.masks.begin()->second, h, w);
      EXPECT_EQ(connected_components(mask, h, w).size(), 1u);
    }
  }
  const auto reloaded = load_manifest(ra.manifest_path);
  EXPECT_EQ(reloaded.records.size(), m.records.size());
  EXPECT_TRUE(fs::exists(ra.composites_path));
  EXPECT_EQ(file_bytes(ra.composites_path).size(), file_bytes(b / "composites.json").size());
}

TEST(Augment, ProbabilityZeroIsIdentity) {
  Image img(16, 16, 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i % 7) / 7.0f;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(augment(img, rng, 0.0).pixels, img.pixels);
  EXPECT_EQ(apply_augment(img, AugmentParams{}).pixels, img.pixels);
}

TEST(Augment, ParametersStayInRange) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto p = sample_augment(rng, 1.0, 64, 64);
    EXPECT_LE(std::abs(p.angle_deg), kMaxRotationDeg);
    EXPECT_LE(std::abs(p.dx), kMaxTranslationPx * 64 / kTranslationReferenceSize);
    EXPECT_LE(std::abs(p.dy), kMaxTranslationPx * 64 / kTranslationReferenceSize);
    EXPECT_GE(p.gain, kMinContrastGain);
    EXPECT_LE(p.gain, kMaxContrastGain);
    EXPECT_LE(std::abs(p.offset), kMaxBrightnessOffset);
  }
}

TEST(Augment, SeededAndClamped) {
  Image img(16, 16, 1, 0.95f);
  img.at(0, 3, 3) = 0.0f;
  std::mt19937_64 r1(3), r2(3);
  for (int i = 0; i < 10; ++i) {
    const auto a = augment(img, r1, 1.0);
    EXPECT_EQ(a.pixels, augment(img, r2, 1.0).pixels);
    for (float v : a.pixels) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  AugmentParams bright;
  bright.offset = 0.1;
  for (float v : apply_augment(img, bright).pixels) EXPECT_LE(v, 1.0f);
}

TEST(Augment, IntegerTranslationShiftsContent) {
  Image img(8, 8, 1, 0.0f);
  img.at(0, 2, 3) = 1.0f;
  AugmentParams p;
  p.dx = 2.0;
  p.dy = 1.0;
  const auto out = apply_augment(img, p);
  EXPECT_NEAR(out.at(0, 3, 5), 1.0f, 1e-6f);
  EXPECT_NEAR(out.at(0, 2, 3), 0.0f, 1e-6f);
}

TEST(Batches, ClassGroupsAndPlainOrder) {
  const LabelMatrix y(6, 2, {0, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0});
  const auto g = class_groups(y);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[0], (std::vector<std::size_t>{0, 2, 5}));
  EXPECT_EQ(g[1], (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(g[2], (std::vector<std::size_t>{3}));
  auto order = epoch_order(y, false, 1, 0);
  std::sort(order.begin(), order.end());
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_NE(epoch_order(y, false, 1, 0), epoch_order(y, false, 1, 1));
  EXPECT_EQ(epoch_order(y, true, 1, 4), epoch_order(y, true, 1, 4));
  EXPECT_THROW(class_groups(LabelMatrix(1, 2, {1, 1})), DataError);
}

TEST(Batches, SingleClassDatasetGivesTwoBatchesOfFour) {
  LoadedSplit data;
  data.height = data.width = 8;
  data.channels = 1;
  for (int i = 0; i < 8; ++i) data.images.emplace_back(8, 8, 1, i / 8.0f);
  data.labels = LabelMatrix::zeros(8, 1);
  BatchIterator it(data, BatchOptions{.batch_size = 4, .balanced = true, .augment_p = 0.0, .seed = 3}, 0);
  EXPECT_EQ(it.num_batches(), 2u);
  std::set<std::size_t> items;
  int batches = 0;
  while (auto b = it.next()) {
    ++batches;
    EXPECT_EQ(b->images.shape(), (Shape{4, 1, 8, 8}));
    EXPECT_EQ(b->labels.rows(), 4);
    items.insert(b->items.begin(), b->items.end());
    // Inputs are mapped from [0, 1] to [-1, 1].
    EXPECT_FLOAT_EQ(b->images[0], (data.images[b->items[0]].pixels[0] - 0.5f) / 0.5f);
  }
  EXPECT_EQ(batches, 2);
  EXPECT_EQ(items.size(), 8u);
}

TEST(Batches, BalancedEpochCoversEveryImage) {
  LoadedSplit data;
  data.height = data.width = 4;
  data.channels = 1;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    data.images.emplace_back(4, 4, 1, 0.5f);
    y.push_back(i < 34 ? 0 : 1);
  }
  data.labels = LabelMatrix(40, 1, y);
  BatchIterator it(data, BatchOptions{.batch_size = 32, .balanced = true, .augment_p = 0.5, .seed = 1}, 2);
  std::set<std::size_t> seen(it.order().begin(), it.order().end());
  EXPECT_EQ(seen.size(), 40u);
  EXPECT_GE(it.order().size(), 40u);
  std::size_t total = 0;
  while (auto b = it.next()) total += b->items.size();
  EXPECT_EQ(total, it.order().size());
}
