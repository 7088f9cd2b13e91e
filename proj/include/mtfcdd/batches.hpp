#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mtfcdd/image_io.hpp"
#include "mtfcdd/loss.hpp"
#include "mtfcdd/manifest.hpp"
#include "mtfcdd/tensor.hpp"

namespace mtfcdd {

// One split decoded into memory.
struct LoadedSplit {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::size_t> records;  // manifest indices
  std::vector<Image> images;
  LabelMatrix labels;
  // masks[i][k]: ground truth of type k for image i, empty when absent.
  std::vector<std::vector<std::vector<std::uint8_t>>> masks;

  std::size_t size() const { return images.size(); }
  bool has_any_mask() const;
};

// Decodes every image of the split (and its masks when with_masks). Throws
// DataError naming the file on decode failures or size mismatches.
LoadedSplit load_split(const DatasetManifest& manifest, Split split, bool with_masks);

// Maps [0, 1] pixels to [-1, 1] and stacks them as N x c x h x w.
Tensor<float> to_batch_tensor(std::span<const Image> images);

struct BatchOptions {
  int batch_size = 32;
  bool balanced = true;
  double augment_p = 0.5;  // 0 disables augmentation
  std::uint64_t seed = 1;
};

// Class groups for the balanced sampler: all-normal rows first, then one
// group per type; empty groups are dropped. Rows must be single-label.
std::vector<std::vector<std::size_t>> class_groups(const LabelMatrix& labels);

// Draw order of one epoch. Balanced: sampler draws until every group has
// been drawn at least its size; otherwise one shuffled pass. Depends only on
// (labels, balanced, seed, epoch).
std::vector<std::size_t> epoch_order(const LabelMatrix& labels, bool balanced, std::uint64_t seed,
                                     std::uint64_t epoch);

struct Batch {
  Tensor<float> images;
  LabelMatrix labels;
  std::vector<std::size_t> items;  // indices into the LoadedSplit
};

// Batches of one epoch in draw order; the last batch may be partial.
class BatchIterator {
 public:
  BatchIterator(const LoadedSplit& data, const BatchOptions& options, std::uint64_t epoch);

  std::optional<Batch> next();
  std::size_t num_batches() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const LoadedSplit* data_;
  BatchOptions options_;
  std::uint64_t augment_seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace mtfcdd
