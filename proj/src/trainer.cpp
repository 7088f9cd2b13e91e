#include "mtfcdd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "mtfcdd/error.hpp"
#include "mtfcdd/loss.hpp"

namespace mtfcdd {

namespace fs = std::filesystem;

TrainingPlan plan_training(const RunConfig& config, const LabelMatrix& train_labels) {
  TrainingPlan plan;
  plan.balanced = config.training.balanced;
  plan.train_images = static_cast<std::size_t>(train_labels.rows());
  if (plan.train_images == 0) throw DataError("training split is empty");
  std::vector<std::uint64_t> balanced;
  for (int e = 0; e < config.training.epochs; ++e) {
    balanced.push_back(epoch_order(train_labels, true, config.training.seed, static_cast<std::uint64_t>(e)).size());
    plan.balanced_draws += balanced.back();
  }
  if (plan.balanced) {
    plan.epochs = balanced.size();
    plan.draws_per_epoch = std::move(balanced);
  } else {
    const double ratio = static_cast<double>(plan.balanced_draws) / static_cast<double>(plan.train_images);
    plan.epochs = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(ratio)));
    plan.draws_per_epoch.assign(plan.epochs, plan.train_images);
  }
  return plan;
}

RunConfig resolve_config(RunConfig config, const DatasetManifest& manifest) {
  if (config.model.num_types != 0 && config.model.num_types != manifest.num_types()) {
    throw ConfigError("num_types=" + std::to_string(config.model.num_types) + " but the manifest lists " +
                      std::to_string(manifest.num_types()) + " classes");
  }
  config.model.num_types = manifest.num_types();
  config.model.height = manifest.height;
  config.model.width = manifest.width;
  config.model.channels = manifest.channels;
  config.model.seed = config.training.seed;
  config.validate();
  return config;
}

namespace {

void say(std::ostream* log, const char* fmt, auto... args) {
  if (!log) return;
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  *log << buf << std::flush;
}

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

void check_resume_compatible(const RunConfig& want, const RunConfig& have) {
  const auto& a = want.model;
  const auto& b = have.model;
  if (a.num_types != b.num_types || a.height != b.height || a.width != b.width || a.channels != b.channels ||
      a.backbone_stages != b.backbone_stages || a.head_blocks != b.head_blocks || a.head_filters != b.head_filters ||
      a.head_bias != b.head_bias) {
    throw ConfigError("checkpoint model does not match the requested configuration");
  }
  if (want.training.seed != have.training.seed || want.training.balanced != have.training.balanced ||
      want.optimizer.batch_size != have.optimizer.batch_size) {
    throw ConfigError("resuming needs the same seed, batch size and sampling mode as the checkpoint");
  }
}

}  // namespace

TrainResult train(const RunConfig& requested, const DatasetManifest& manifest, const TrainOptions& options) {
  const RunConfig config = resolve_config(requested, manifest);
  if (manifest.anomalous_count(Split::kTrain) == 0) {
    throw DataError("training split has no anomalous images; training needs labelled anomalies alongside normal data");
  }
  std::ostream* log = options.log;
  const LoadedSplit train_split = load_split(manifest, Split::kTrain, false);
  std::optional<LoadedSplit> test_split;
  if (config.training.evaluate_each_epoch) test_split = load_split(manifest, Split::kTest, true);

  const TrainingPlan plan = plan_training(config, train_split.labels);
  for (int k = 0; k < manifest.num_types(); ++k) {
    bool any = false;
    for (int i = 0; i < train_split.labels.rows(); ++i) any = any || train_split.labels.at(i, k);
    if (!any) say(log, "warning: type %s has no training image; its channel only sees normal data\n", manifest.classes[k].c_str());
  }

  CheckpointState state;
  state.config = config;
  state.classes = manifest.classes;
  std::optional<Model<float>> model;
  if (options.resume) {
    LoadedCheckpoint ck = load_checkpoint(*options.resume);
    check_resume_compatible(config, ck.state.config);
    state = std::move(ck.state);
    state.config.training.epochs = config.training.epochs;
    model.emplace(std::move(ck.model));
    say(log, "resumed from %s at epoch %llu\n", options.resume->string().c_str(),
        static_cast<unsigned long long>(state.epoch));
  } else {
    model.emplace(config.model);
  }

  say(log, "training: %s sampling, %llu epochs, %zu images, %llu draws planned (%.2f standard epochs)\n",
      plan.balanced ? "balanced" : "plain", static_cast<unsigned long long>(plan.epochs), plan.train_images,
      static_cast<unsigned long long>(plan.balanced ? plan.balanced_draws : plan.epochs * plan.train_images),
      static_cast<double>(plan.balanced ? plan.balanced_draws : plan.epochs * plan.train_images) /
          static_cast<double>(plan.train_images));

  TrainResult result{std::move(*model), {}, plan, {}, std::nullopt, {}, {}};
  Model<float>& net = result.model;
  auto params = net.parameters();
  const AdamOptions adam{config.optimizer.lr, config.optimizer.beta1, config.optimizer.beta2, 1e-8};
  const BatchOptions batch_opts{config.optimizer.batch_size, plan.balanced, config.training.augment_p,
                                config.training.seed};

  double best = -1.0;
  for (const auto& h : state.history) {
    if (h.mean_i_auroc && *h.mean_i_auroc > best) best = *h.mean_i_auroc;
  }
  std::uint64_t drawn = 0;
  for (std::uint64_t e = 0; e < state.epoch && e < plan.draws_per_epoch.size(); ++e) drawn += plan.draws_per_epoch[e];

  std::uint64_t ran = 0;
  while (state.epoch < plan.epochs) {
    if (options.max_epochs_this_call != 0 && ran >= options.max_epochs_this_call) break;
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t epoch = state.epoch;
    BatchIterator it(train_split, batch_opts, epoch);
    double epoch_loss = 0.0;
    std::uint64_t epoch_batches = 0;
    LossWindow window{epoch + 1, state.iterations + 1, 0, 0.0};
    while (auto batch = it.next()) {
      auto out = net.forward(batch->images, BnMode::kTrain);
      Var<float> loss = multitype_loss(anomaly_scores(out.heatmaps), batch->labels);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) throw NumericError("loss became non-finite at iteration " + std::to_string(state.iterations + 1));
      backward(loss);
      adam_step<float>(params, adam);
      state.iterations += 1;
      drawn += batch->items.size();
      epoch_loss += value;
      epoch_batches += 1;
      window.mean_loss += value;
      window.iterations += 1;
      if (window.iterations == static_cast<std::uint64_t>(config.training.log_every)) {
        window.mean_loss /= static_cast<double>(window.iterations);
        say(log, "epoch %llu iter %llu loss %.6f\n", static_cast<unsigned long long>(window.epoch),
            static_cast<unsigned long long>(state.iterations), window.mean_loss);
        result.loss_log.push_back(window);
        window = LossWindow{epoch + 1, state.iterations + 1, 0, 0.0};
      }
    }
    if (window.iterations > 0) {
      window.mean_loss /= static_cast<double>(window.iterations);
      say(log, "epoch %llu iter %llu loss %.6f\n", static_cast<unsigned long long>(window.epoch),
          static_cast<unsigned long long>(state.iterations), window.mean_loss);
      result.loss_log.push_back(window);
    }

    EpochMetrics em;
    em.epoch = epoch + 1;
    em.iterations = state.iterations;
    em.train_loss = epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0;
    em.std_epochs = static_cast<double>(drawn) / static_cast<double>(plan.train_images);
    if (test_split) {
      const ScoredSplit scored = score_split(net, *test_split, config.optimizer.batch_size);
      EvaluationReport rep = evaluate(scored, *test_split, manifest.classes, config.eval);
      em.mean_i_auroc = rep.mean_i_auroc;
      em.mean_p_auroc = rep.mean_p_auroc;
      em.mean_aupro = rep.mean_aupro;
      result.final_report = std::move(rep);
    }
    state.epoch = epoch + 1;
    state.history.push_back(em);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    say(log, "epoch %llu/%llu done: %llu iterations, %.2f standard epochs, loss %.6f, I-AUROC %s, P-AUROC %s, AUPRO %s (%.1fs)\n",
        static_cast<unsigned long long>(em.epoch), static_cast<unsigned long long>(plan.epochs),
        static_cast<unsigned long long>(em.iterations), em.std_epochs, em.train_loss, opt_str(em.mean_i_auroc).c_str(),
        opt_str(em.mean_p_auroc).c_str(), opt_str(em.mean_aupro).c_str(), secs);

    if (!options.out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03llu.ckpt", static_cast<unsigned long long>(em.epoch));
      result.last_checkpoint = options.out_dir / name;
      save_checkpoint(result.last_checkpoint, state, net);
      if (em.mean_i_auroc && *em.mean_i_auroc > best) {
        best = *em.mean_i_auroc;
        result.best_checkpoint = options.out_dir / "best.ckpt";
        save_checkpoint(result.best_checkpoint, state, net);
      }
    }
    ++ran;
  }
  result.state = std::move(state);
  return result;
}

}  // namespace mtfcdd
