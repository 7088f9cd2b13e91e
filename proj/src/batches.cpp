#include "mtfcdd/batches.hpp"

#include <algorithm>
#include <random>

#include "mtfcdd/augment.hpp"
#include "mtfcdd/error.hpp"
#include "mtfcdd/sampler.hpp"

namespace mtfcdd {

bool LoadedSplit::has_any_mask() const {
  for (const auto& per_image : masks) {
    for (const auto& m : per_image) {
      if (!m.empty()) return true;
    }
  }
  return false;
}

LoadedSplit load_split(const DatasetManifest& manifest, Split split, bool with_masks) {
  LoadedSplit out;
  out.height = manifest.height;
  out.width = manifest.width;
  out.channels = manifest.channels;
  out.records = manifest.indices(split);
  out.labels = manifest.labels(out.records);
  out.images.resize(out.records.size());
  out.masks.assign(out.records.size(), std::vector<std::vector<std::uint8_t>>(manifest.num_types()));
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    const SampleRecord& r = manifest.records[out.records[i]];
    Image img = read_png(r.image);
    if (img.height != manifest.height || img.width != manifest.width || img.channels != manifest.channels) {
      throw DataError("image '" + r.image.string() + "' is " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + "x" + std::to_string(img.channels) + ", manifest expects " +
                      std::to_string(manifest.height) + "x" + std::to_string(manifest.width) + "x" +
                      std::to_string(manifest.channels));
    }
    out.images[i] = std::move(img);
    if (!with_masks) continue;
    for (const auto& [k, path] : r.masks) {
      int h = 0;
      int w = 0;
      auto mask = read_mask_png(path, h, w);
      if (h != manifest.height || w != manifest.width) {
        throw DataError("mask '" + path.string() + "' does not match the image size");
      }
      out.masks[i][k] = std::move(mask);
    }
  }
  return out;
}

Tensor<float> to_batch_tensor(std::span<const Image> images) {
  if (images.empty()) throw ConfigError("to_batch_tensor: empty batch");
  const Image& first = images.front();
  Tensor<float> t({static_cast<int>(images.size()), first.channels, first.height, first.width});
  float* dst = t.data();
  for (const auto& img : images) {
    if (img.height != first.height || img.width != first.width || img.channels != first.channels) {
      throw ConfigError("to_batch_tensor: images differ in size");
    }
    for (float v : img.pixels) *dst++ = (v - 0.5f) / 0.5f;
  }
  return t;
}

std::vector<std::vector<std::size_t>> class_groups(const LabelMatrix& labels) {
  std::vector<std::vector<std::size_t>> groups(labels.cols() + 1);
  for (int i = 0; i < labels.rows(); ++i) {
    const int pos = labels.positives(i);
    if (pos > 1) throw DataError("training row " + std::to_string(i) + " carries more than one anomaly type");
    int g = 0;
    for (int k = 0; k < labels.cols(); ++k) {
      if (labels.at(i, k)) g = k + 1;
    }
    groups[g].push_back(static_cast<std::size_t>(i));
  }
  std::erase_if(groups, [](const auto& g) { return g.empty(); });
  return groups;
}

std::vector<std::size_t> epoch_order(const LabelMatrix& labels, bool balanced, std::uint64_t seed,
                                     std::uint64_t epoch) {
  if (labels.rows() == 0) throw DataError("cannot iterate an empty split");
  const std::uint64_t epoch_seed = derive_seed(seed, epoch);
  std::vector<std::size_t> order;
  if (balanced) {
    BalancedSampler sampler(class_groups(labels), derive_seed(epoch_seed, 0));
    while (!sampler.epoch_complete()) order.push_back(sampler.next_sample());
  } else {
    order.resize(static_cast<std::size_t>(labels.rows()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(derive_seed(epoch_seed, 0));
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

BatchIterator::BatchIterator(const LoadedSplit& data, const BatchOptions& options, std::uint64_t epoch)
    : data_(&data),
      options_(options),
      augment_seed_(derive_seed(derive_seed(options.seed, epoch), 1)),
      order_(epoch_order(data.labels, options.balanced, options.seed, epoch)) {
  if (options.batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

std::size_t BatchIterator::num_batches() const {
  const std::size_t b = static_cast<std::size_t>(options_.batch_size);
  return (order_.size() + b - 1) / b;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t begin = cursor_;
  const std::size_t end = std::min(order_.size(), begin + static_cast<std::size_t>(options_.batch_size));
  cursor_ = end;

  Batch b;
  b.items.assign(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<Image> images(b.items.size());
  // Each draw position has its own augmentation stream, so the result does
  // not depend on the thread count.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(b.items.size()); ++j) {
    const Image& src = data_->images[b.items[j]];
    if (options_.augment_p > 0.0) {
      std::mt19937_64 rng(derive_seed(augment_seed_, begin + static_cast<std::size_t>(j)));
      images[j] = augment(src, rng, options_.augment_p);
    } else {
      images[j] = src;
    }
  }
  b.images = to_batch_tensor(images);
  const int m = data_->labels.cols();
  b.labels = LabelMatrix::zeros(static_cast<int>(b.items.size()), m);
  for (std::size_t j = 0; j < b.items.size(); ++j) {
    for (int k = 0; k < m; ++k) b.labels.set(static_cast<int>(j), k, data_->labels.at(static_cast<int>(b.items[j]), k));
  }
  return b;
}

}  // namespace mtfcdd
