#include "mtfcdd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "mtfcdd/error.hpp"
#include "mtfcdd/metrics.hpp"
#include "mtfcdd/sampler.hpp"

namespace mtfcdd {

namespace fs = std::filesystem;

void SyntheticConfig::validate() const {
  if (num_types < 1 || num_types > kMaxSyntheticTypes) {
    throw ConfigError("num_types must be in [1, " + std::to_string(kMaxSyntheticTypes) + "]");
  }
  if (image_size < 32) throw ConfigError("image_size must be at least 32");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(test_normal_fraction > 0.0 && test_normal_fraction < 1.0)) {
    throw ConfigError("test_normal_fraction must lie in (0, 1)");
  }
  if (normal_count < 2 || per_type_count < 1) throw ConfigError("need at least 2 normal and 1 image per type");
  if (composites < 0) throw ConfigError("composites must be non-negative");
  if (composites > 0 && num_types < 2) throw ConfigError("composites need at least 2 types");
  plan_synthetic_split(*this);
}

int SyntheticSplit::train_total() const {
  int n = train_normal;
  for (int a : train_anomalous) n += a;
  return n;
}

double SyntheticSplit::achieved_alpha() const {
  const int total = train_total();
  return total == 0 ? 0.0 : static_cast<double>(total - train_normal) / total;
}

SyntheticSplit plan_synthetic_split(const SyntheticConfig& c) {
  SyntheticSplit s;
  s.test_normal = static_cast<int>(std::lround(c.normal_count * c.test_normal_fraction));
  s.train_normal = c.normal_count - s.test_normal;
  if (s.test_normal < 1 || s.train_normal < 1) {
    throw ConfigError("normal_count too small for a train/test split");
  }
  // alpha = A / (train_normal + A)
  const int anomalous = static_cast<int>(std::lround(c.alpha * s.train_normal / (1.0 - c.alpha)));
  for (int k = 0; k < c.num_types; ++k) {
    const int a = anomalous / c.num_types + (k < anomalous % c.num_types ? 1 : 0);
    if (a > c.per_type_count - 1) {
      throw ConfigError("alpha=" + std::to_string(c.alpha) + " needs " + std::to_string(a) +
                        " training images of type " + std::string(kSyntheticCodes[k]) + " but per_type_count=" +
                        std::to_string(c.per_type_count) + " leaves none for testing");
    }
    s.train_anomalous.push_back(a);
    s.test_anomalous.push_back(c.per_type_count - a);
  }
  return s;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Canvas {
  int size;
  std::vector<double> px;
  double& at(int y, int x) { return px[static_cast<std::size_t>(y) * size + x]; }
};

struct ObjectGeometry {
  double cx, cy, radius;
  double background;
  bool inside(double x, double y) const { return std::hypot(x - cx, y - cy) <= radius; }
};

ObjectGeometry draw_object(Canvas& cv, Rng& rng) {
  const double s = cv.size;
  ObjectGeometry g;
  g.cx = (s - 1) / 2.0 + uniform(rng, -0.04, 0.04) * s;
  g.cy = (s - 1) / 2.0 + uniform(rng, -0.04, 0.04) * s;
  g.radius = s * uniform(rng, 0.34, 0.38);
  g.background = uniform(rng, 0.10, 0.16);
  const double base = uniform(rng, 0.55, 0.65);
  const double fx = uniform(rng, 2.0, 4.0) * 2.0 * std::numbers::pi / s;
  const double fy = uniform(rng, 2.0, 4.0) * 2.0 * std::numbers::pi / s;
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (int y = 0; y < cv.size; ++y) {
    for (int x = 0; x < cv.size; ++x) {
      if (g.inside(x, y)) {
        const double r2 = (std::pow(x - g.cx, 2) + std::pow(y - g.cy, 2)) / (g.radius * g.radius);
        cv.at(y, x) = base + 0.05 * std::sin(fx * x + fy * y + phase) + 0.05 * (1.0 - r2);
      } else {
        cv.at(y, x) = g.background;
      }
    }
  }
  return g;
}

using Mask = std::vector<std::uint8_t>;

// Random point at most max_r from the object centre.
void interior_point(const ObjectGeometry& g, Rng& rng, double max_r, double& x, double& y) {
  const double r = max_r * std::sqrt(uniform(rng, 0.0, 1.0));
  const double t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  x = g.cx + r * std::cos(t);
  y = g.cy + r * std::sin(t);
}

Mask pit(Canvas& cv, const ObjectGeometry& g, Rng& rng) {
  const double scale = cv.size / 64.0;
  const double r = uniform(rng, 2.0, 3.5) * scale;
  double px = 0, py = 0;
  interior_point(g, rng, g.radius - r - 3.0 * scale, px, py);
  Mask m(cv.px.size(), 0);
  for (int y = 0; y < cv.size; ++y) {
    for (int x = 0; x < cv.size; ++x) {
      if (std::hypot(x - px, y - py) <= r) {
        cv.at(y, x) *= 0.35;
        m[static_cast<std::size_t>(y) * cv.size + x] = 1;
      }
    }
  }
  return m;
}

void line(Mask& m, int size, int x0, int y0, int x1, int y1) {
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (x0 >= 0 && x0 < size && y0 >= 0 && y0 < size) m[static_cast<std::size_t>(y0) * size + x0] = 1;
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

Mask scratch(Canvas& cv, const ObjectGeometry& g, Rng& rng) {
  const double scale = cv.size / 64.0;
  const double margin = g.radius - 4.0 * scale;
  Mask m(cv.px.size(), 0);
  double x = 0, y = 0;
  interior_point(g, rng, margin * 0.6, x, y);
  double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const int segments = 2 + static_cast<int>(rng() % 2);
  for (int s = 0; s < segments; ++s) {
    const double len = uniform(rng, 6.0, 10.0) * scale;
    double nx = x + len * std::cos(heading);
    double ny = y + len * std::sin(heading);
    if (std::hypot(nx - g.cx, ny - g.cy) > margin) {
      heading += std::numbers::pi * 0.75;
      nx = x + len * std::cos(heading);
      ny = y + len * std::sin(heading);
      if (std::hypot(nx - g.cx, ny - g.cy) > margin) break;
    }
    line(m, cv.size, static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)),
         static_cast<int>(std::lround(nx)), static_cast<int>(std::lround(ny)));
    x = nx;
    y = ny;
    heading += uniform(rng, -0.9, 0.9);
  }
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (m[p]) cv.px[p] = std::min(1.0, cv.px[p] + 0.32);
  }
  return m;
}

Mask missing_part(Canvas& cv, const ObjectGeometry& g, Rng& rng) {
  const double scale = cv.size / 64.0;
  const double t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double depth = uniform(rng, 0.0, 3.0) * scale;
  const double cx = g.cx + (g.radius - depth) * std::cos(t);
  const double cy = g.cy + (g.radius - depth) * std::sin(t);
  const double r = uniform(rng, 7.0, 10.0) * scale;
  Mask m(cv.px.size(), 0);
  for (int y = 0; y < cv.size; ++y) {
    for (int x = 0; x < cv.size; ++x) {
      if (g.inside(x, y) && std::hypot(x - cx, y - cy) <= r) {
        cv.at(y, x) = g.background;
        m[static_cast<std::size_t>(y) * cv.size + x] = 1;
      }
    }
  }
  return m;
}

Mask contamination(Canvas& cv, const ObjectGeometry& g, Rng& rng) {
  const double scale = cv.size / 64.0;
  const double a = uniform(rng, 5.0, 8.0) * scale;
  const double b = uniform(rng, 4.0, 6.0) * scale;
  const double rot = uniform(rng, 0.0, std::numbers::pi);
  double cx = 0, cy = 0;
  interior_point(g, rng, g.radius - a - 2.0 * scale, cx, cy);
  const double fx = uniform(rng, 0.8, 1.4);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  Mask m(cv.px.size(), 0);
  for (int y = 0; y < cv.size; ++y) {
    for (int x = 0; x < cv.size; ++x) {
      const double u = ((x - cx) * std::cos(rot) + (y - cy) * std::sin(rot)) / a;
      const double v = (-(x - cx) * std::sin(rot) + (y - cy) * std::cos(rot)) / b;
      if (u * u + v * v <= 1.0) {
        cv.at(y, x) -= 0.13 + 0.03 * std::sin(fx * (x + y) + phase);
        m[static_cast<std::size_t>(y) * cv.size + x] = 1;
      }
    }
  }
  return m;
}

Mask draw_defect(int family, Canvas& cv, const ObjectGeometry& g, Rng& rng) {
  switch (family) {
    case 0: return pit(cv, g, rng);
    case 1: return scratch(cv, g, rng);
    case 2: return missing_part(cv, g, rng);
    case 3: return contamination(cv, g, rng);
    default: throw ConfigError("unknown synthetic defect family " + std::to_string(family));
  }
}

bool single_component(const Mask& m, int size) {
  return connected_components(m, size, size).size() == 1;
}

void centroid(const Mask& m, int size, double& x, double& y) {
  double sx = 0, sy = 0, n = 0;
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (!m[p]) continue;
    sx += static_cast<double>(p % size);
    sy += static_cast<double>(p / size);
    n += 1;
  }
  x = sx / n;
  y = sy / n;
}

// Masks closer than `gap` pixels (Chebyshev) count as touching.
bool masks_apart(const Mask& a, const Mask& b, int size, int gap) {
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (!a[p]) continue;
    const int y = static_cast<int>(p / size);
    const int x = static_cast<int>(p % size);
    for (int dy = -gap; dy <= gap; ++dy) {
      for (int dx = -gap; dx <= gap; ++dx) {
        const int ny = y + dy;
        const int nx = x + dx;
        if (ny >= 0 && ny < size && nx >= 0 && nx < size && b[static_cast<std::size_t>(ny) * size + nx]) return false;
      }
    }
  }
  return true;
}

}  // namespace

RenderedSample render_sample(int size, std::span<const int> types, std::uint64_t seed) {
  if (size < 32) throw ConfigError("render_sample: size must be at least 32");
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i] < 0 || types[i] >= kMaxSyntheticTypes) throw ConfigError("render_sample: unknown defect family");
    for (std::size_t j = 0; j < i; ++j) {
      if (types[i] == types[j]) throw ConfigError("render_sample: defect families must be distinct");
    }
  }
  Rng rng(seed);
  constexpr int kMaxAttempts = 200;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Canvas cv{size, std::vector<double>(static_cast<std::size_t>(size) * size)};
    const ObjectGeometry g = draw_object(cv, rng);
    RenderedSample out;
    bool ok = true;
    for (int family : types) {
      // Draw onto a scratch copy so a rejected placement leaves no trace.
      Canvas trial = cv;
      Mask m = draw_defect(family, trial, g, rng);
      if (!single_component(m, size)) {
        ok = false;
        break;
      }
      for (const auto& prev : out.masks) {
        double ax, ay, bx, by;
        centroid(prev, size, ax, ay);
        centroid(m, size, bx, by);
        if (!masks_apart(prev, m, size, 3) || std::hypot(ax - bx, ay - by) < 0.3 * size) ok = false;
      }
      if (!ok) break;
      cv = std::move(trial);
      out.types.push_back(family);
      out.masks.push_back(std::move(m));
    }
    if (!ok) continue;
    std::normal_distribution<double> noise(0.0, 0.015);
    out.image = Image(size, size, 1);
    for (std::size_t p = 0; p < cv.px.size(); ++p) {
      const double v = std::clamp(cv.px[p] + noise(rng), 0.0, 1.0);
      out.image.pixels[p] = static_cast<float>(std::lround(v * 255.0) / 255.0);
    }
    return out;
  }
  throw ConfigError("render_sample: could not place the requested defects");
}

SyntheticResult generate_synthetic(const SyntheticConfig& config, const fs::path& out_dir) {
  config.validate();
  SyntheticResult result;
  result.split = plan_synthetic_split(config);
  const int size = config.image_size;

  DatasetManifest& m = result.manifest;
  m.height = size;
  m.width = size;
  m.channels = 1;
  m.alpha = result.split.achieved_alpha();
  for (int k = 0; k < config.num_types; ++k) m.classes.emplace_back(kSyntheticCodes[k]);

  std::uint64_t stream = 0;
  char name[64];
  auto emit = [&](Split split, int type, int index, DatasetManifest& target) {
    const std::string code = type < 0 ? std::string(kNormalCode) : std::string(kSyntheticCodes[type]);
    std::vector<int> types;
    if (type >= 0) types.push_back(type);
    const RenderedSample s = render_sample(size, types, derive_seed(config.seed, stream++));
    std::snprintf(name, sizeof(name), "%05d", index);
    const fs::path dir = out_dir / std::string(split_name(split)) / code;
    SampleRecord r;
    r.image = dir / (std::string(name) + ".png");
    r.split = split;
    r.category = "synthetic";
    write_png(r.image, s.image);
    if (type >= 0) {
      r.labels.push_back(type);
      if (split == Split::kTest) {
        r.masks[type] = dir / (std::string(name) + "_mask.png");
        write_mask_png(r.masks[type], s.masks.front(), size, size);
      }
    }
    target.records.push_back(std::move(r));
    result.histogram[std::string(split_name(split)) + "/" + code] += 1;
  };

  for (int i = 0; i < result.split.train_normal; ++i) emit(Split::kTrain, -1, i, m);
  for (int k = 0; k < config.num_types; ++k) {
    for (int i = 0; i < result.split.train_anomalous[k]; ++i) emit(Split::kTrain, k, i, m);
  }
  for (int i = 0; i < result.split.test_normal; ++i) emit(Split::kTest, -1, i, m);
  for (int k = 0; k < config.num_types; ++k) {
    for (int i = 0; i < result.split.test_anomalous[k]; ++i) emit(Split::kTest, k, i, m);
  }
  m.validate(true);
  result.manifest_path = out_dir / "manifest.json";
  save_manifest(m, result.manifest_path);

  if (config.composites > 0) {
    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < config.num_types; ++a) {
      for (int b = a + 1; b < config.num_types; ++b) pairs.emplace_back(a, b);
    }
    DatasetManifest comp = m;
    comp.records.clear();
    comp.alpha = 0.0;
    for (int i = 0; i < config.composites; ++i) {
      const auto [a, b] = pairs[i % pairs.size()];
      const int types[] = {a, b};
      const RenderedSample s = render_sample(size, types, derive_seed(config.seed, stream++));
      std::snprintf(name, sizeof(name), "%05d", i);
      SampleRecord r;
      r.image = out_dir / "composites" / (std::string(name) + ".png");
      r.split = Split::kTest;
      r.category = "composite";
      write_png(r.image, s.image);
      for (std::size_t d = 0; d < s.types.size(); ++d) {
        const int k = s.types[d];
        r.labels.push_back(k);
        r.masks[k] = out_dir / "composites" / (std::string(name) + "_" + std::string(kSyntheticCodes[k]) + "_mask.png");
        write_mask_png(r.masks[k], s.masks[d], size, size);
      }
      comp.records.push_back(std::move(r));
      result.histogram["composite"] += 1;
    }
    comp.validate(true);
    result.composites_path = out_dir / "composites.json";
    save_manifest(comp, result.composites_path);
  }
  return result;
}

}  // namespace mtfcdd
