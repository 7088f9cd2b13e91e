#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtfcdd/ops.hpp"
#include "mtfcdd/optim.hpp"

namespace mtfcdd {

struct ModelConfig {
  int num_types = 8;  // M, one output heatmap per anomaly type
  int height = 64;
  int width = 64;
  int channels = 1;
  int backbone_stages = 3;  // 2, 3 or 4 downsampling stages
  int head_blocks = 2;      // 1, 2 or 3 conv blocks in the head
  int head_filters = 128;
  bool head_bias = false;  // bias on the final 1x1 conv
  std::uint64_t seed = 1;

  // Throws ConfigError on out-of-range fields or indivisible input size.
  void validate() const;
  int heatmap_height() const { return height >> backbone_stages; }
  int heatmap_width() const { return width >> backbone_stages; }
};

// Filters of each reference backbone stage (3x3 conv + BN + ReLU + 2x pool).
std::vector<int> backbone_filters(int stages);

template <typename T>
struct NetworkOutput {
  Var<T> phi;        // raw network output, N x M x u x v
  Var<T> heatmaps;   // sqrt(phi^2 + 1) - 1, same shape
  Var<T> upsampled;  // N x M x h x w, empty until upsample_output()
};

struct ParameterCount {
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  std::size_t total() const { return trainable + frozen; }
};

template <typename T>
ParameterCount count_parameters(std::span<Parameter<T>* const> params);

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config);

  // Movable, not copyable: parameters are graph leaves.
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }

  NetworkOutput<T> forward(const Var<T>& batch, BnMode mode);
  NetworkOutput<T> forward(const Tensor<T>& batch, BnMode mode) { return forward(Var<T>(batch), mode); }

  // Fills `upsampled` at the configured input size. Throws ConfigError when
  // (h, w) differs from the configured input size.
  NetworkOutput<T> upsample_output(const NetworkOutput<T>& output, int h, int w) const;

  // Fixed order: backbone stages, head blocks, output layer.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  struct NamedStats {
    std::string name;
    BatchNormStats<T>* stats;
  };
  std::vector<NamedStats> batch_norm_stats();

  ParameterCount parameter_count() const;
  void set_backbone_trainable(bool trainable);

 private:
  struct ConvBlock {
    std::string name;
    Parameter<T> weight;
    Parameter<T> gamma;
    Parameter<T> beta;
    BatchNormStats<T> stats;
  };

  Var<T> run_block(ConvBlock& block, const Var<T>& x, BnMode mode, bool pool);

  ModelConfig config_;
  std::vector<ConvBlock> backbone_;
  std::vector<ConvBlock> head_;
  Parameter<T> output_weight_;
  std::optional<Parameter<T>> output_bias_;
};

// Bilinear resize of the heatmaps to (h, w); h >= u and w >= v required.
template <typename T>
NetworkOutput<T> upsample_output(const NetworkOutput<T>& output, int h, int w);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace mtfcdd
