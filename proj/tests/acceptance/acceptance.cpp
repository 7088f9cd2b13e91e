// Acceptance run: one PASS/FAIL line per criterion at pinned tolerances.
// Exit status is 0 only when every line passes.

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mtfcdd/batches.hpp"
#include "mtfcdd/error.hpp"
#include "mtfcdd/evaluation.hpp"
#include "mtfcdd/gradcheck.hpp"
#include "mtfcdd/loss.hpp"
#include "mtfcdd/manifest.hpp"
#include "mtfcdd/metrics.hpp"
#include "mtfcdd/sampler.hpp"
#include "mtfcdd/synthetic.hpp"
#include "mtfcdd/trainer.hpp"
#include "support/gradcases.hpp"
#include "support/oracles.hpp"

using namespace mtfcdd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void verdict(bool ok, const char* id, const std::string& text) {
  std::printf("%s %s %s\n", ok ? "PASS" : "FAIL", id, text.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------

void gradient_checks() {
  const auto t0 = Clock::now();
  const auto cases = gradcases::make_cases(20240601, 3);
  double worst = 0.0;
  std::string worst_name;
  std::set<std::string> ops;
  for (const auto& c : cases) {
    const double e = finite_difference_check(c.graph, c.inputs).worst();
    ops.insert(c.name.substr(0, c.name.find('#')));
    if (e > worst) {
      worst = e;
      worst_name = c.name;
    }
  }
  const double secs = seconds_since(t0);
  verdict(worst < 1e-4 && cases.size() >= 20 && secs < 120.0, "C1",
          fmt("finite differences: max rel err %.3g (%s) over %zu shapes, %zu ops [< 1e-4, >= 20 shapes], %.1fs "
              "[< 120s]",
              worst, worst_name.c_str(), cases.size(), ops.size(), secs));
}

void loss_identities() {
  std::mt19937_64 rng(77);
  auto draw = [&](int n, int m, double lo, double hi) {
    Tensor<double> z({n, m});
    for (auto& v : z.values()) v = std::uniform_real_distribution<double>(lo, hi)(rng);
    return z;
  };
  int exact = 0;
  double binary_gap = 0.0;
  bool signs = true;
  for (int t = 0; t < 200; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 16)(rng);
    const int m = std::uniform_int_distribution<int>(1, 8)(rng);
    const Tensor<double> z = draw(n, m, 0.0, 10.0);
    double mean = 0.0;
    for (double v : z.values()) mean += v;
    mean /= static_cast<double>(n * m);
    exact += multitype_loss(Var<double>(z), LabelMatrix::zeros(n, m)).value()[0] == mean;

    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = std::uniform_int_distribution<int>(0, 1)(rng);
    binary_gap = std::max(binary_gap, binary_mode_equivalence(draw(n, 1, 1e-3, 30.0), LabelMatrix(n, 1, y)).abs_difference);

    std::vector<int> ym(static_cast<std::size_t>(n * m));
    for (auto& v : ym) v = std::uniform_int_distribution<int>(0, 1)(rng);
    signs = signs && loss_gradient_sanity(draw(n, m, 1e-3, 30.0), LabelMatrix(n, m, ym)).signs_match;
  }
  double stable_gap = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double z = 1e-3 * std::pow(30.0 / 1e-3, i / 100000.0);
    stable_gap = std::max(stable_gap, std::abs(anomalous_term_stable(z) - anomalous_term_naive(z)));
  }
  verdict(exact == 200, "C2a", fmt("all-normal labels: loss == mean(z) exactly on %d/200 instances", exact));
  verdict(binary_gap < 1e-12, "C2b", fmt("M=1 vs binary objective: max |diff| %.3g [< 1e-12]", binary_gap));
  verdict(stable_gap < 1e-9, "C2c", fmt("stable vs naive log term on [1e-3, 30]: max |diff| %.3g [< 1e-9]", stable_gap));
  verdict(signs, "C2d", "gradient sign follows label on 200 random instances");
}

void sampler_checks() {
  const auto t0 = Clock::now();
  double coupon_worst = 0.0;
  for (int n = 2; n <= 10; ++n) {
    const std::vector<std::size_t> q(static_cast<std::size_t>(n), 1);
    const double mu = estimate_epoch_length(q, 100000, 32, derive_seed(1, n)).mean_draws;
    coupon_worst = std::max(coupon_worst, std::abs(mu / oracle::coupon_collector(n) - 1.0));
  }
  double markov_worst = 0.0;
  int markov_cases = 0;
  for (int n = 1; n <= 3; ++n) {
    std::vector<int> q(static_cast<std::size_t>(n), 1);
    while (true) {
      const std::vector<std::size_t> qs(q.begin(), q.end());
      const double mu = estimate_epoch_length(qs, 100000, 32, derive_seed(2, markov_cases)).mean_draws;
      markov_worst = std::max(markov_worst, std::abs(mu / oracle::markov_expected_draws(q) - 1.0));
      ++markov_cases;
      int i = 0;
      while (i < n && q[i] == 4) q[i++] = 1;
      if (i == n) break;
      ++q[i];
    }
  }
  const double ratio = std_epoch_ratio(15206.14, 57840, 32);
  const double rounded = std::round(ratio * 100.0) / 100.0;
  const double secs = seconds_since(t0);
  verdict(coupon_worst < 0.01, "C3a", fmt("mu_T vs n*H_n, n=2..10, 1e5 trials: max rel dev %.4f [< 0.01]", coupon_worst));
  verdict(markov_worst < 0.01, "C3b",
          fmt("mu_T vs absorbing-chain oracle, %d quota vectors (n<=3, m<=4): max rel dev %.4f [< 0.01]", markov_cases,
              markov_worst));
  verdict(rounded == 8.41 && 57840.0 / 32.0 == 1807.5, "C3c",
          fmt("15206.14 / (57840/32) = %.4f -> %.2f [8.41]", ratio, rounded));
  verdict(secs < 60.0, "C3d", fmt("sampler checks took %.1fs [< 60s]", secs));
}

// Up to three filled rectangles; overlapping or touching ones merge into one component.
std::vector<std::uint8_t> blob_mask(std::mt19937_64& rng, int h, int w) {
  while (true) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w, 0);
    const int count = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int c = 0; c < count; ++c) {
      const int y0 = std::uniform_int_distribution<int>(0, h - 1)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, w - 1)(rng);
      const int y1 = std::min(h, y0 + std::uniform_int_distribution<int>(1, 5)(rng));
      const int x1 = std::min(w, x0 + std::uniform_int_distribution<int>(1, 5)(rng));
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) m[y * w + x] = 1;
      }
    }
    const auto comps = oracle::union_find_components(m, h, w);
    const bool has_normal = std::find(m.begin(), m.end(), 0) != m.end();
    if (!comps.empty() && comps.size() <= 3 && has_normal) return m;
  }
}

std::vector<PixelMap> views(const std::vector<oracle::TinyMap>& maps) {
  std::vector<PixelMap> out;
  for (const auto& m : maps) out.push_back({m.scores, m.mask, m.h, m.w});
  return out;
}

void metric_checks() {
  std::mt19937_64 rng(99);
  double auroc_gap = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 300)(rng);
    const int levels = std::uniform_int_distribution<int>(2, 50)(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
      y[i] = static_cast<std::uint8_t>(i == 0 ? 0 : i == 1 ? 1 : std::uniform_int_distribution<int>(0, 1)(rng));
    }
    auroc_gap = std::max(auroc_gap, std::abs(auroc(s, y) - oracle::pairwise_auroc(s, y)));
  }
  verdict(auroc_gap < 1e-12, "C4a", fmt("AUROC vs pairwise statistic, 200 instances: max |diff| %.3g [< 1e-12]", auroc_gap));

  double pro_gap = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::vector<oracle::TinyMap> maps(static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 2)(rng)));
    for (auto& m : maps) {
      m.h = std::uniform_int_distribution<int>(4, 16)(rng);
      m.w = std::uniform_int_distribution<int>(4, 16)(rng);
      m.mask = blob_mask(rng, m.h, m.w);
      for (std::size_t p = 0; p < m.mask.size(); ++p) {
        const float base = std::uniform_int_distribution<int>(0, 40)(rng) / 40.0f;
        m.scores.push_back(base + (m.mask[p] ? 0.4f : 0.0f));
      }
    }
    for (double limit : {0.05, 0.3, 1.0}) {
      pro_gap = std::max(pro_gap, std::abs(aupro(pro_curve(views(maps)), limit) - oracle::brute_force_aupro(maps, limit)));
    }
  }
  verdict(pro_gap < 1e-9, "C4b",
          fmt("AUPRO vs brute force, 50 instances (<= 16x16, <= 3 components), limits 0.05/0.3/1: max |diff| %.3g "
              "[< 1e-9]",
              pro_gap));

  int comp_match = 0;
  int order_match = 0;
  for (int t = 0; t < 100; ++t) {
    const int h = std::uniform_int_distribution<int>(1, 40)(rng);
    const int w = std::uniform_int_distribution<int>(1, 40)(rng);
    std::bernoulli_distribution on(std::uniform_real_distribution<double>(0.1, 0.6)(rng));
    std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w);
    for (auto& v : m) v = on(rng);
    std::set<std::vector<int>> got;
    for (const auto& c : connected_components(m, h, w)) {
      auto p = c.pixels;
      std::sort(p.begin(), p.end());
      got.insert(p);
    }
    const auto want_v = oracle::union_find_components(m, h, w);
    comp_match += got == std::set<std::vector<int>>(want_v.begin(), want_v.end());
    // Same mask with rows and columns reversed: pixel visiting order changes.
    std::vector<std::uint8_t> r(m.rbegin(), m.rend());
    std::set<std::vector<int>> flipped;
    for (const auto& c : connected_components(r, h, w)) {
      std::vector<int> p;
      for (int q : c.pixels) p.push_back(h * w - 1 - q);
      std::sort(p.begin(), p.end());
      flipped.insert(p);
    }
    order_match += flipped == got;
  }
  verdict(comp_match == 100, "C4c", fmt("8-connected components vs union-find oracle: %d/100 masks equal", comp_match));
  verdict(order_match == 100, "C4d", fmt("component partition under reversed traversal: %d/100 masks equal", order_match));

  // Threshold resolution: 64x64 maps with > 5000 distinct scores.
  std::vector<oracle::TinyMap> big(4);
  for (auto& m : big) {
    m.h = m.w = 64;
    m.mask.assign(4096, 0);
    const int cy = std::uniform_int_distribution<int>(10, 54)(rng);
    const int cx = std::uniform_int_distribution<int>(10, 54)(rng);
    for (int p = 0; p < 4096; ++p) {
      const int y = p / 64, x = p % 64;
      m.mask[p] = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= 36;
      m.scores.push_back(std::uniform_real_distribution<float>(0.0f, 1.0f)(rng) + (m.mask[p] ? 0.5f : 0.0f));
    }
  }
  const double base = aupro(pro_curve(views(big), kDefaultMaxThresholds));
  const double fine = aupro(pro_curve(views(big), 2 * kDefaultMaxThresholds));
  verdict(std::abs(base - fine) < 1e-3, "C4e",
          fmt("AUPRO at %zu vs %zu thresholds: %.5f vs %.5f, |diff| %.2g [< 1e-3]", kDefaultMaxThresholds,
              2 * kDefaultMaxThresholds, base, fine, std::abs(base - fine)));
}

// ---------------------------------------------------------------------------

struct ArmResult {
  TrainResult train;
  EvaluationReport report;
  double seconds = 0.0;
};

RunConfig acceptance_config(std::uint64_t seed, bool balanced, int epochs) {
  RunConfig c;
  c.training.seed = seed;
  c.training.balanced = balanced;
  c.training.epochs = epochs;
  c.training.evaluate_each_epoch = false;
  c.training.log_every = 1000000;
  return c;
}

ArmResult run_arm(const RunConfig& config, const DatasetManifest& manifest, const LoadedSplit& test) {
  const auto t0 = Clock::now();
  ArmResult r{train(config, manifest, TrainOptions{}), {}, 0.0};
  const ScoredSplit scored = score_split(r.train.model, test, config.optimizer.batch_size);
  r.report = evaluate(scored, test, manifest.classes, config.eval);
  r.seconds = seconds_since(t0);
  return r;
}

// Pixels whose value is at least the 90th-percentile value of the channel.
std::vector<std::uint8_t> top_decile(std::span<const float> channel) {
  std::vector<float> sorted(channel.begin(), channel.end());
  const std::size_t cut = sorted.size() - (sorted.size() + 9) / 10;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(cut), sorted.end());
  const float t = sorted[cut];
  std::vector<std::uint8_t> out(channel.size());
  for (std::size_t i = 0; i < channel.size(); ++i) out[i] = channel[i] >= t;
  return out;
}

void composite_check(Model<float>& model, const fs::path& composites_path) {
  const DatasetManifest cm = load_manifest(composites_path);
  const LoadedSplit comp = load_split(cm, Split::kTest, true);
  const ScoredSplit scored = score_split(model, comp, 32);
  int good = 0;
  for (std::size_t i = 0; i < comp.size(); ++i) {
    const auto& labels = cm.records[comp.records[i]].labels;
    bool ok = labels.size() == 2;
    for (std::size_t j = 0; ok && j < 2; ++j) {
      const int own = labels[j];
      const int other = labels[1 - j];
      const auto& mask = comp.masks[i][own];
      double sy = 0.0, sx = 0.0, n = 0.0;
      for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        sy += static_cast<double>(p / comp.width);
        sx += static_cast<double>(p % comp.width);
        n += 1.0;
      }
      const std::size_t c = static_cast<std::size_t>(std::lround(sy / n)) * comp.width +
                            static_cast<std::size_t>(std::lround(sx / n));
      ok = top_decile(scored.channel(i, own))[c] && !top_decile(scored.channel(i, other))[c];
    }
    good += ok;
  }
  const double frac = static_cast<double>(good) / static_cast<double>(comp.size());
  verdict(frac >= 0.8, "C6",
          fmt("two-defect composites localized in own channel only: %d/%zu = %.2f [>= 0.80]", good, comp.size(), frac));
}

void end_to_end(const fs::path& work, int epochs) {
  SyntheticConfig sc;
  sc.num_types = 3;
  sc.image_size = 64;
  sc.normal_count = 500;
  sc.per_type_count = 70;
  sc.alpha = 0.2;
  sc.composites = 40;
  sc.seed = 7;
  fs::remove_all(work / "synthetic");
  const SyntheticResult data = generate_synthetic(sc, work / "synthetic");
  const DatasetManifest& manifest = data.manifest;
  const LoadedSplit test = load_split(manifest, Split::kTest, true);
  std::printf("INFO dataset: %zu images, %d train (alpha %.3f), %zu test, %d composites; %d balanced epochs per run\n",
              manifest.records.size(), data.split.train_total(), data.split.achieved_alpha(), test.size(), sc.composites,
              epochs);

  const std::uint64_t seeds[] = {1, 2, 3};
  std::vector<double> balanced_mean, plain_mean;
  std::optional<ArmResult> primary;
  for (std::uint64_t seed : seeds) {
    ArmResult b = run_arm(acceptance_config(seed, true, epochs), manifest, test);
    ArmResult u = run_arm(acceptance_config(seed, false, epochs), manifest, test);
    std::printf("INFO seed %llu: balanced mean I-AUROC %.4f P-AUROC %.4f AUPRO %.4f (%.0fs) | plain %llu epochs mean "
                "I-AUROC %.4f P-AUROC %.4f AUPRO %.4f (%.0fs)\n",
                static_cast<unsigned long long>(seed), b.report.mean_i_auroc.value_or(-1),
                b.report.mean_p_auroc.value_or(-1), b.report.mean_aupro.value_or(-1), b.seconds,
                static_cast<unsigned long long>(u.train.plan.epochs), u.report.mean_i_auroc.value_or(-1),
                u.report.mean_p_auroc.value_or(-1), u.report.mean_aupro.value_or(-1), u.seconds);
    std::fflush(stdout);
    balanced_mean.push_back(b.report.mean_i_auroc.value_or(0.0));
    plain_mean.push_back(u.report.mean_i_auroc.value_or(0.0));
    if (!primary) primary = std::move(b);
  }

  const EvaluationReport& rep = primary->report;
  std::printf("%s", format_report(rep).c_str());
  double min_i = 1.0;
  for (const auto& c : rep.classes) min_i = std::min(min_i, c.i_auroc.value_or(0.0));
  verdict(min_i >= 0.90, "C5a", fmt("seed 1 per-type I-AUROC min %.4f [>= 0.90]", min_i));
  verdict(rep.mean_p_auroc.value_or(0.0) >= 0.85, "C5b", fmt("seed 1 mean P-AUROC %.4f [>= 0.85]", rep.mean_p_auroc.value_or(0.0)));
  verdict(rep.mean_aupro.value_or(0.0) >= 0.50, "C5c", fmt("seed 1 mean AUPRO %.4f [>= 0.50]", rep.mean_aupro.value_or(0.0)));
  verdict(primary->seconds <= 1200.0, "C5d",
          fmt("seed 1 train+evaluate wall time %.0fs on %d threads [<= 1200s]", primary->seconds, omp_get_max_threads()));
  int not_better = 0;
  for (std::size_t i = 0; i < balanced_mean.size(); ++i) not_better += plain_mean[i] <= balanced_mean[i];
  verdict(not_better >= 2, "C5e",
          fmt("plain-sampling mean I-AUROC <= balanced on %d/3 seeds [>= 2] (balanced %.4f %.4f %.4f, plain %.4f %.4f "
              "%.4f)",
              not_better, balanced_mean[0], balanced_mean[1], balanced_mean[2], plain_mean[0], plain_mean[1],
              plain_mean[2]));

  composite_check(primary->train.model, data.composites_path);

  // Two identical runs, compared through their serialized reports and weights.
  const RunConfig rc = acceptance_config(11, true, 1);
  ArmResult a = run_arm(rc, manifest, test);
  ArmResult b = run_arm(rc, manifest, test);
  bool same_weights = true;
  const auto pa = a.train.model.parameters(), pb = b.train.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    same_weights = same_weights && std::ranges::equal(pa[i]->value().values(), pb[i]->value().values());
  }
  const bool same_report = report_to_json(a.report) == report_to_json(b.report);
  verdict(same_report && same_weights, "C7",
          fmt("identical-seed runs: reports %s, weights %s", same_report ? "identical" : "DIFFER",
              same_weights ? "identical" : "DIFFER"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  fs::path work = fs::temp_directory_path() / "mtfcdd_acceptance";
  int epochs = TrainingConfig{}.epochs;
  bool skip_training = false;
  app.add_option("--work-dir", work, "Scratch directory for the synthetic dataset");
  app.add_option("--epochs", epochs, "Balanced epochs per training run");
  app.add_flag("--skip-training", skip_training, "Only run the criteria that need no training");
  CLI11_PARSE(app, argc, argv);

  try {
    gradient_checks();
    loss_identities();
    sampler_checks();
    metric_checks();
    if (!skip_training) end_to_end(work, epochs);
  } catch (const std::exception& e) {
    std::printf("FAIL ERROR unexpected exception: %s\n", e.what());
    ++g_failures;
  }
  std::printf("%s: %d failing\n", g_failures == 0 ? "ALL PASS" : "NOT ALL PASS", g_failures);
  return g_failures == 0 ? 0 : 1;
}
