#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mtfcdd {

// One class of the balanced stream (normal or one anomaly type).
struct ClassQuota {
  int class_id = 0;
  std::size_t quota = 0;          // m_i, the class size
  std::vector<std::size_t> pool;  // dataset indices, reshuffled per cycle
  std::size_t cursor = 0;         // next position in pool
  std::size_t drawn = 0;          // draws in the current balanced epoch
};

// Uniform-over-classes sampler. Each draw picks one of the n classes with
// probability 1/n, then takes the next index from that class's shuffled pool,
// reshuffling when the pool is exhausted. A balanced epoch ends once every
// class has been drawn at least quota times.
class BalancedSampler {
 public:
  // class_indices[i] lists the dataset indices of class i. Throws ConfigError
  // when there are no classes or any class is empty.
  BalancedSampler(std::vector<std::vector<std::size_t>> class_indices, std::uint64_t seed);

  std::size_t next_sample();
  int last_class() const noexcept { return last_class_; }
  bool epoch_complete() const noexcept { return unfinished_ == 0; }
  // Resets per-epoch counters; pools keep their current order and cursor.
  void start_epoch();

  std::uint64_t iterations() const noexcept { return iterations_; }
  const std::vector<ClassQuota>& quotas() const noexcept { return quotas_; }
  std::size_t num_classes() const noexcept { return quotas_.size(); }

 private:
  std::vector<ClassQuota> quotas_;
  std::mt19937_64 rng_;
  std::uint64_t iterations_ = 0;
  std::size_t unfinished_ = 0;
  int last_class_ = -1;
};

struct EpochLengthEstimate {
  double mean_draws = 0.0;        // mu_T
  double mean_batches = 0.0;      // mu_T / batch_size
  double std_draws = 0.0;         // sample standard deviation of T
  std::vector<std::uint64_t> trial_draws;
};

// Monte Carlo estimate of E[T], the draws needed until class i has been drawn
// m_i times for every i. Trial j uses a seed derived from (seed, j), so the
// result does not depend on the thread count.
EpochLengthEstimate estimate_epoch_length(std::span<const std::size_t> quotas, std::size_t trials,
                                          std::size_t batch_size, std::uint64_t seed);

// mu_T_batch / (total_images / batch_size): balanced epochs in standard epochs.
double std_epoch_ratio(double mean_batches, std::size_t total_images, std::size_t batch_size);

// splitmix64 finalizer used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mtfcdd
