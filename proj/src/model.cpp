#include "mtfcdd/model.hpp"

#include <cmath>
#include <random>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

void ModelConfig::validate() const {
  if (num_types < 1) throw ConfigError("num_types must be >= 1");
  if (height < 1 || width < 1 || channels < 1) throw ConfigError("input size must be positive");
  if (backbone_stages < 2 || backbone_stages > 4) throw ConfigError("backbone_stages must be 2, 3 or 4");
  if (head_blocks < 1 || head_blocks > 3) throw ConfigError("head_blocks must be 1, 2 or 3");
  if (head_filters < 1) throw ConfigError("head_filters must be positive");
  const int div = 1 << backbone_stages;
  if (height % div != 0 || width % div != 0) {
    throw ConfigError("input size " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by 2^" + std::to_string(backbone_stages));
  }
}

std::vector<int> backbone_filters(int stages) {
  static constexpr int kFilters[] = {32, 64, 128, 256};
  if (stages < 1 || stages > 4) throw ConfigError("backbone_stages must be 2, 3 or 4");
  return {kFilters, kFilters + stages};
}

template <typename T>
ParameterCount count_parameters(std::span<Parameter<T>* const> params) {
  ParameterCount c;
  for (const Parameter<T>* p : params) (p->trainable ? c.trainable : c.frozen) += p->value().size();
  return c;
}

namespace {

template <typename T>
Tensor<T> he_normal(Shape shape, std::mt19937_64& rng) {
  const int fan_in = shape[1] * shape[2] * shape[3];
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  auto make_block = [&](const std::string& name, int in_ch, int out_ch) {
    ConvBlock b{name,
                Parameter<T>(name + ".conv.weight", he_normal<T>(Shape{out_ch, in_ch, 3, 3}, rng)),
                Parameter<T>(name + ".bn.gamma", Tensor<T>(Shape{out_ch}, T{1})),
                Parameter<T>(name + ".bn.beta", Tensor<T>(Shape{out_ch}, T{0})),
                BatchNormStats<T>(out_ch)};
    return b;
  };
  int ch = config_.channels;
  const auto filters = backbone_filters(config_.backbone_stages);
  for (std::size_t s = 0; s < filters.size(); ++s) {
    backbone_.push_back(make_block("backbone." + std::to_string(s), ch, filters[s]));
    ch = filters[s];
  }
  for (int b = 0; b < config_.head_blocks; ++b) {
    head_.push_back(make_block("head." + std::to_string(b), ch, config_.head_filters));
    ch = config_.head_filters;
  }
  output_weight_ = Parameter<T>("output.weight", he_normal<T>(Shape{config_.num_types, ch, 1, 1}, rng));
  if (config_.head_bias) output_bias_.emplace("output.bias", Tensor<T>(Shape{config_.num_types}, T{0}));
}

template <typename T>
Var<T> Model<T>::run_block(ConvBlock& block, const Var<T>& x, BnMode mode, bool pool) {
  try {
    Var<T> y = conv2d(x, block.weight.var, Var<T>{}, 1, 1);
    y = batch_norm(y, block.gamma.var, block.beta.var, block.stats, mode);
    y = relu(y);
    return pool ? max_pool2(y) : y;
  } catch (const NumericError& e) {
    throw NumericError("layer " + block.name + ": " + e.what());
  }
}

template <typename T>
NetworkOutput<T> Model<T>::forward(const Var<T>& batch, BnMode mode) {
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[1] != config_.channels || s[2] != config_.height || s[3] != config_.width) {
    throw ConfigError("input batch " + shape_str(s) + " does not match model input (N," +
                      std::to_string(config_.channels) + "," + std::to_string(config_.height) + "," +
                      std::to_string(config_.width) + ")");
  }
  Var<T> x = batch;
  for (auto& block : backbone_) x = run_block(block, x, mode, true);
  for (auto& block : head_) x = run_block(block, x, mode, false);
  NetworkOutput<T> out;
  try {
    out.phi = conv2d(x, output_weight_.var, output_bias_ ? output_bias_->var : Var<T>{}, 1, 0);
    out.heatmaps = pseudo_huber(out.phi);
  } catch (const NumericError& e) {
    throw NumericError(std::string("layer output: ") + e.what());
  }
  return out;
}

template <typename T>
NetworkOutput<T> Model<T>::upsample_output(const NetworkOutput<T>& output, int h, int w) const {
  if (h != config_.height || w != config_.width) {
    throw ConfigError("upsample target " + std::to_string(h) + "x" + std::to_string(w) +
                      " differs from model input " + std::to_string(config_.height) + "x" +
                      std::to_string(config_.width));
  }
  return mtfcdd::upsample_output(output, h, w);
}

template <typename T>
NetworkOutput<T> upsample_output(const NetworkOutput<T>& output, int h, int w) {
  if (!output.heatmaps) throw ConfigError("upsample_output called without heatmaps");
  NetworkOutput<T> out = output;
  out.upsampled = bilinear_upsample(output.heatmaps, h, w);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> ps;
  for (auto* blocks : {&backbone_, &head_}) {
    for (auto& b : *blocks) {
      ps.push_back(&b.weight);
      ps.push_back(&b.gamma);
      ps.push_back(&b.beta);
    }
  }
  ps.push_back(&output_weight_);
  if (output_bias_) ps.push_back(&*output_bias_);
  return ps;
}

template <typename T>
std::vector<const Parameter<T>*> Model<T>::parameters() const {
  auto ps = const_cast<Model*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

template <typename T>
std::vector<typename Model<T>::NamedStats> Model<T>::batch_norm_stats() {
  std::vector<NamedStats> out;
  for (auto* blocks : {&backbone_, &head_}) {
    for (auto& b : *blocks) out.push_back({b.name + ".bn", &b.stats});
  }
  return out;
}

template <typename T>
ParameterCount Model<T>::parameter_count() const {
  auto ps = const_cast<Model*>(this)->parameters();
  return count_parameters<T>(ps);
}

template <typename T>
void Model<T>::set_backbone_trainable(bool trainable) {
  for (auto& b : backbone_) {
    b.weight.set_trainable(trainable);
    b.gamma.set_trainable(trainable);
    b.beta.set_trainable(trainable);
  }
}

template class Model<float>;
template class Model<double>;
template NetworkOutput<float> upsample_output(const NetworkOutput<float>&, int, int);
template NetworkOutput<double> upsample_output(const NetworkOutput<double>&, int, int);
template ParameterCount count_parameters(std::span<Parameter<float>* const>);
template ParameterCount count_parameters(std::span<Parameter<double>* const>);

}  // namespace mtfcdd
