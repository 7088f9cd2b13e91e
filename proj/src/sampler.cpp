#include "mtfcdd/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "mtfcdd/error.hpp"

namespace mtfcdd {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

BalancedSampler::BalancedSampler(std::vector<std::vector<std::size_t>> class_indices, std::uint64_t seed)
    : rng_(seed) {
  if (class_indices.empty()) throw ConfigError("balanced sampler needs at least one class");
  for (std::size_t i = 0; i < class_indices.size(); ++i) {
    if (class_indices[i].empty()) {
      throw ConfigError("balanced sampler class " + std::to_string(i) + " has no images");
    }
    ClassQuota q;
    q.class_id = static_cast<int>(i);
    q.quota = class_indices[i].size();
    q.pool = std::move(class_indices[i]);
    std::shuffle(q.pool.begin(), q.pool.end(), rng_);
    quotas_.push_back(std::move(q));
  }
  unfinished_ = quotas_.size();
}

std::size_t BalancedSampler::next_sample() {
  std::uniform_int_distribution<std::size_t> pick(0, quotas_.size() - 1);
  ClassQuota& q = quotas_[pick(rng_)];
  if (q.cursor == q.pool.size()) {
    std::shuffle(q.pool.begin(), q.pool.end(), rng_);
    q.cursor = 0;
  }
  const std::size_t index = q.pool[q.cursor++];
  if (++q.drawn == q.quota) --unfinished_;
  ++iterations_;
  last_class_ = q.class_id;
  return index;
}

void BalancedSampler::start_epoch() {
  for (auto& q : quotas_) q.drawn = 0;
  unfinished_ = quotas_.size();
  iterations_ = 0;
  last_class_ = -1;
}

EpochLengthEstimate estimate_epoch_length(std::span<const std::size_t> quotas, std::size_t trials,
                                          std::size_t batch_size, std::uint64_t seed) {
  if (quotas.empty()) throw ConfigError("estimate_epoch_length needs at least one class quota");
  if (trials < 1) throw ConfigError("estimate_epoch_length needs at least one trial");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  for (std::size_t m : quotas) {
    if (m < 1) throw ConfigError("class quotas must be positive");
  }
  const std::size_t n = quotas.size();
  EpochLengthEstimate est;
  est.trial_draws.assign(trials, 0);
  const long long trial_count = static_cast<long long>(trials);
#pragma omp parallel
  {
    std::vector<std::size_t> drawn(n);
#pragma omp for schedule(static)
    for (long long j = 0; j < trial_count; ++j) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::fill(drawn.begin(), drawn.end(), 0);
      std::size_t unfinished = n;
      std::uint64_t t = 0;
      while (unfinished > 0) {
        const std::size_t c = pick(rng);
        if (++drawn[c] == quotas[c]) --unfinished;
        ++t;
      }
      est.trial_draws[static_cast<std::size_t>(j)] = t;
    }
  }
  double total = 0.0;
  for (auto t : est.trial_draws) total += static_cast<double>(t);
  est.mean_draws = total / static_cast<double>(trials);
  double ss = 0.0;
  for (auto t : est.trial_draws) {
    const double d = static_cast<double>(t) - est.mean_draws;
    ss += d * d;
  }
  est.std_draws = trials > 1 ? std::sqrt(ss / static_cast<double>(trials - 1)) : 0.0;
  est.mean_batches = est.mean_draws / static_cast<double>(batch_size);
  return est;
}

double std_epoch_ratio(double mean_batches, std::size_t total_images, std::size_t batch_size) {
  if (total_images == 0) throw ConfigError("std_epoch_ratio needs total_images > 0");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  return mean_batches / (static_cast<double>(total_images) / static_cast<double>(batch_size));
}

}  // namespace mtfcdd
