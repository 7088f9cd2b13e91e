// mtfcdd: dataset generation, training, evaluation, inference and sampler
// simulation. Errors print one line "mtfcdd: error[<kind>] exit=<code>: <text>".

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mtfcdd/checkpoint.hpp"
#include "mtfcdd/config.hpp"
#include "mtfcdd/error.hpp"
#include "mtfcdd/evaluation.hpp"
#include "mtfcdd/inference.hpp"
#include "mtfcdd/manifest.hpp"
#include "mtfcdd/sampler.hpp"
#include "mtfcdd/synthetic.hpp"
#include "mtfcdd/trainer.hpp"

namespace fs = std::filesystem;
using namespace mtfcdd;

namespace {

int fail(std::string_view kind, int code, std::string text) {
  for (auto& ch : text) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::cerr << "mtfcdd: error[" << kind << "] exit=" << code << ": " << text << '\n';
  return code;
}

// Flag overrides shared by train and evaluate.
struct Overrides {
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<int> num_types;
  std::optional<bool> balanced;
  std::optional<int> stages;
  std::optional<int> head_blocks;
  std::optional<std::uint64_t> seed;
  std::optional<double> fpr_limit;
  std::optional<int> epochs;

  void apply(RunConfig& c) const {
    if (lr) c.optimizer.lr = *lr;
    if (batch_size) c.optimizer.batch_size = *batch_size;
    if (num_types) c.model.num_types = *num_types;
    if (balanced) c.training.balanced = *balanced;
    if (stages) c.model.backbone_stages = *stages;
    if (head_blocks) c.model.head_blocks = *head_blocks;
    if (seed) c.training.seed = *seed;
    if (fpr_limit) c.eval.fpr_limit = *fpr_limit;
    if (epochs) c.training.epochs = *epochs;
    c.validate();
  }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
  cmd->add_option("--num-types", o.num_types, "Number of anomaly types M (must match the manifest)");
  cmd->add_flag_function(
      "--balanced,!--no-balanced", [&o](std::int64_t n) { o.balanced = n > 0; }, "Balanced sampling on/off");
  cmd->add_option("--stages", o.stages, "Backbone downsampling stages (2-4)");
  cmd->add_option("--head-blocks", o.head_blocks, "Head conv blocks (1-3)");
  cmd->add_option("--seed", o.seed, "Seed for init, sampling and augmentation");
  cmd->add_option("--fpr-limit", o.fpr_limit, "FPR limit for AUPRO");
  cmd->add_option("--epochs", o.epochs, "Balanced epochs of training budget");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text << '\n';
}

std::vector<std::size_t> parse_quotas(const std::string& s) {
  std::vector<std::size_t> q;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      q.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("quotas must be a comma-separated list of positive integers, got '" + s + "'");
    }
  }
  if (q.empty()) throw ConfigError("quotas list is empty");
  return q;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-type FCDD anomaly detection"};
  app.require_subcommand(1);

  // gen-synthetic
  SyntheticConfig syn;
  fs::path syn_out;
  auto* gen = app.add_subcommand("gen-synthetic", "Render the procedural multi-type dataset");
  gen->add_option("--out", syn_out, "Output directory")->required();
  gen->add_option("--num-types", syn.num_types, "Defect types (1-4)");
  gen->add_option("--image-size", syn.image_size, "Square image size");
  gen->add_option("--normal", syn.normal_count, "Normal images");
  gen->add_option("--per-type", syn.per_type_count, "Anomalous images per type");
  gen->add_option("--alpha", syn.alpha, "Anomalous fraction of the training split");
  gen->add_option("--test-normal-fraction", syn.test_normal_fraction, "Normal images held out for testing");
  gen->add_option("--composites", syn.composites, "Two-defect test images");
  gen->add_option("--seed", syn.seed, "Generator seed");

  // train
  fs::path train_config;
  fs::path train_manifest;
  fs::path train_out = "runs/latest";
  fs::path train_resume;
  bool no_eval = false;
  Overrides train_over;
  auto* trn = app.add_subcommand("train", "Train a model");
  trn->add_option("--config", train_config, "Run config (JSON)");
  trn->add_option("--manifest", train_manifest, "Dataset manifest (overrides the config)");
  trn->add_option("--out", train_out, "Checkpoint directory");
  trn->add_option("--resume", train_resume, "Checkpoint to resume from");
  trn->add_flag("--no-eval", no_eval, "Skip per-epoch test evaluation");
  add_overrides(trn, train_over);

  // evaluate
  fs::path eval_ckpt;
  fs::path eval_manifest;
  fs::path eval_json;
  std::optional<double> eval_fpr;
  auto* evl = app.add_subcommand("evaluate", "Evaluate a checkpoint on a test split");
  evl->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  evl->add_option("--manifest", eval_manifest, "Dataset manifest (defaults to the training manifest)");
  evl->add_option("--json", eval_json, "Also write the report as JSON");
  evl->add_option("--fpr-limit", eval_fpr, "FPR limit for AUPRO");

  // infer
  fs::path infer_ckpt;
  fs::path infer_out;
  std::vector<fs::path> infer_images;
  bool infer_resize = false;
  auto* inf = app.add_subcommand("infer", "Write per-type heatmaps and scores for images");
  inf->add_option("--checkpoint", infer_ckpt, "Checkpoint file")->required();
  inf->add_option("--out", infer_out, "Output directory")->required();
  inf->add_option("images", infer_images, "PNG images")->required();
  inf->add_flag("--resize", infer_resize, "Rescale images to the model input size");

  // simulate-epochs
  std::string sim_quotas;
  fs::path sim_manifest;
  std::size_t sim_trials = 10000;
  std::size_t sim_batch = 32;
  std::uint64_t sim_seed = 1;
  auto* sim = app.add_subcommand("simulate-epochs", "Monte Carlo balanced-epoch length");
  auto* q_opt = sim->add_option("--quotas", sim_quotas, "Comma-separated class sizes, e.g. 1,1,1");
  auto* m_opt = sim->add_option("--manifest", sim_manifest, "Use the training split's class sizes");
  q_opt->excludes(m_opt);
  sim->add_option("--trials", sim_trials, "Monte Carlo trials");
  sim->add_option("--batch-size", sim_batch, "Batch size for the batch columns");
  sim->add_option("--seed", sim_seed, "Seed");

  // convert-realiad
  std::vector<fs::path> conv_json;
  fs::path conv_root;
  fs::path conv_out;
  int conv_h = 0, conv_w = 0, conv_c = 1;
  auto* conv = app.add_subcommand("convert-realiad", "Build a manifest from Real-IAD annotation JSON files");
  conv->add_option("json", conv_json, "Per-object annotation JSON files")->required();
  conv->add_option("--image-root", conv_root, "Directory the image and mask paths are relative to")->required();
  conv->add_option("--out", conv_out, "Manifest to write")->required();
  conv->add_option("--height", conv_h, "Image height")->required();
  conv->add_option("--width", conv_w, "Image width")->required();
  conv->add_option("--channels", conv_c, "Image channels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config_error", static_cast<int>(ExitCode::kConfig), e.what());
  }

  try {
    if (*gen) {
      const SyntheticResult r = generate_synthetic(syn, syn_out);
      std::printf("wrote %s\n", r.manifest_path.string().c_str());
      if (!r.composites_path.empty()) std::printf("wrote %s\n", r.composites_path.string().c_str());
      int total = 0;
      for (const auto& [key, n] : r.histogram) {
        std::printf("%-16s %6d\n", key.c_str(), n);
        total += n;
      }
      std::printf("%-16s %6d\n", "total", total);
      std::printf("alpha requested %.4f achieved %.4f (%d anomalous of %d training images)\n", syn.alpha,
                  r.split.achieved_alpha(), r.split.train_total() - r.split.train_normal, r.split.train_total());
      return 0;
    }

    if (*conv) {
      const DatasetManifest m = convert_realiad(conv_json, conv_root, conv_h, conv_w, conv_c);
      save_manifest(m, conv_out);
      std::printf("wrote %s (%zu records, %zu classes)\n", conv_out.string().c_str(), m.records.size(),
                  m.classes.size());
      return 0;
    }

    if (*trn) {
      RunConfig cfg = train_config.empty() ? RunConfig{} : load_run_config(train_config);
      if (!train_manifest.empty()) cfg.manifest = train_manifest;
      train_over.apply(cfg);
      if (no_eval) cfg.training.evaluate_each_epoch = false;
      if (cfg.manifest.empty()) throw ConfigError("no manifest given (--manifest or data.manifest in the config)");
      const DatasetManifest manifest = load_manifest(cfg.manifest);
      TrainOptions opts;
      opts.out_dir = train_out;
      opts.log = &std::cout;
      if (!train_resume.empty()) opts.resume = train_resume;
      const TrainResult r = train(cfg, manifest, opts);
      if (r.final_report) std::cout << format_report(*r.final_report);
      std::printf("last checkpoint: %s\n", r.last_checkpoint.string().c_str());
      if (!r.best_checkpoint.empty()) std::printf("best checkpoint: %s\n", r.best_checkpoint.string().c_str());
      return 0;
    }

    if (*evl) {
      LoadedCheckpoint ck = load_checkpoint(eval_ckpt);
      EvalConfig ec = ck.state.config.eval;
      if (eval_fpr) ec.fpr_limit = *eval_fpr;
      if (!(ec.fpr_limit > 0.0 && ec.fpr_limit <= 1.0)) throw ConfigError("--fpr-limit must lie in (0, 1]");
      const fs::path mpath = eval_manifest.empty() ? ck.state.config.manifest : eval_manifest;
      if (mpath.empty()) throw ConfigError("no manifest given and the checkpoint does not name one");
      const DatasetManifest manifest = load_manifest(mpath);
      if (manifest.classes != ck.state.classes) {
        throw ConfigError("manifest classes do not match the checkpoint's output channels");
      }
      const LoadedSplit test = load_split(manifest, Split::kTest, true);
      if (!test.has_any_mask()) std::cerr << "warning: test split has no masks; pixel metrics skipped\n";
      const ScoredSplit scored = score_split(ck.model, test, ck.state.config.optimizer.batch_size);
      const EvaluationReport rep = evaluate(scored, test, manifest.classes, ec);
      std::cout << format_report(rep);
      if (!eval_json.empty()) write_text(eval_json, report_to_json(rep));
      return 0;
    }

    if (*inf) {
      LoadedCheckpoint ck = load_checkpoint(infer_ckpt);
      const auto results = run_inference(ck.model, ck.state.classes, infer_images, infer_out, infer_resize);
      for (const auto& r : results) {
        std::printf("%s", r.image.string().c_str());
        for (std::size_t k = 0; k < r.scores.size(); ++k) {
          std::printf(" %s=%.6f", ck.state.classes[k].c_str(), r.scores[k]);
        }
        std::printf("\n");
      }
      return 0;
    }

    if (*sim) {
      std::vector<std::size_t> quotas;
      if (!sim_quotas.empty()) {
        quotas = parse_quotas(sim_quotas);
      } else if (!sim_manifest.empty()) {
        const DatasetManifest m = load_manifest(sim_manifest);
        const auto idx = m.indices(Split::kTrain);
        for (const auto& g : class_groups(m.labels(idx))) quotas.push_back(g.size());
      } else {
        throw ConfigError("simulate-epochs needs --quotas or --manifest");
      }
      if (sim_trials < 2 || sim_batch < 1) throw ConfigError("need trials >= 2 and batch-size >= 1");
      std::size_t total = 0;
      for (auto q : quotas) total += q;
      const EpochLengthEstimate est = estimate_epoch_length(quotas, sim_trials, sim_batch, sim_seed);
      const double std_iterations = static_cast<double>(total) / static_cast<double>(sim_batch);
      std::printf("%-8s %12s %12s %14s %14s %12s\n", "Images", "mu_T", "sigma_T", "mu_T^batch", "Std.Iter", "Std.Epochs");
      std::printf("%-8zu %12.2f %12.2f %14.2f %14.2f %12.2f\n", total, est.mean_draws, est.std_draws,
                  est.mean_batches, std_iterations, std_epoch_ratio(est.mean_batches, total, sim_batch));
      return 0;
    }
  } catch (const Error& e) {
    return fail(e.kind(), static_cast<int>(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", 1, e.what());
  }
  return 0;
}
