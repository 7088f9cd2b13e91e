#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mtfcdd/error.hpp"
#include "mtfcdd/sampler.hpp"
#include "support/oracles.hpp"

using namespace mtfcdd;

TEST(Sampler, SingleClassEpochIsExactlyItsQuota) {
  BalancedSampler s({{3, 1, 4, 1, 5}}, 1);
  std::multiset<std::size_t> seen;
  while (!s.epoch_complete()) seen.insert(s.next_sample());
  EXPECT_EQ(s.iterations(), 5u);
  EXPECT_EQ(seen, (std::multiset<std::size_t>{1, 1, 3, 4, 5}));
}

TEST(Sampler, PoolsCycleThroughEveryIndexBeforeRepeating) {
  // Class 0 has three images; its first three draws must be a permutation.
  BalancedSampler s({{10, 11, 12}, {20}}, 5);
  std::vector<std::size_t> drawn;
  while (drawn.size() < 3) {
    const auto idx = s.next_sample();
    if (s.last_class() == 0) drawn.push_back(idx);
  }
  std::sort(drawn.begin(), drawn.end());
  EXPECT_EQ(drawn, (std::vector<std::size_t>{10, 11, 12}));
}

TEST(Sampler, EpochEndsWhenEveryQuotaIsMet) {
  BalancedSampler s({{0, 1}, {2, 3, 4}, {5}}, 9);
  std::vector<std::size_t> counts(3, 0);
  while (!s.epoch_complete()) {
    s.next_sample();
    ++counts[static_cast<std::size_t>(s.last_class())];
  }
  EXPECT_GE(counts[0], 2u);
  EXPECT_GE(counts[1], 3u);
  EXPECT_GE(counts[2], 1u);
  EXPECT_EQ(counts[0] + counts[1] + counts[2], s.iterations());
  s.start_epoch();
  EXPECT_FALSE(s.epoch_complete());
}

TEST(Sampler, RejectsEmptyClasses) {
  EXPECT_THROW(BalancedSampler({}, 1), ConfigError);
  EXPECT_THROW(BalancedSampler({{1}, {}}, 1), ConfigError);
}

TEST(Sampler, SeedDeterminesTheStream) {
  auto run = [](std::uint64_t seed) {
    BalancedSampler s({{0, 1, 2}, {3, 4}, {5, 6, 7, 8}}, seed);
    std::vector<std::size_t> v;
    for (int i = 0; i < 50; ++i) v.push_back(s.next_sample());
    return v;
  };
  EXPECT_EQ(run(3), run(3));
  EXPECT_NE(run(3), run(4));
}

TEST(EpochLength, CouponCollectorForUnitQuotas) {
  for (std::size_t n : {2u, 5u, 9u}) {
    const std::vector<std::size_t> q(n, 1);
    const auto est = estimate_epoch_length(q, 20000, 32, 11);
    EXPECT_NEAR(est.mean_draws / oracle::coupon_collector(static_cast<int>(n)), 1.0, 0.02) << n;
  }
}

TEST(EpochLength, MarkovChainOracle) {
  for (const std::vector<int> q : {std::vector<int>{2, 3}, {4, 1, 2}, {3, 3, 3}}) {
    const std::vector<std::size_t> qs(q.begin(), q.end());
    const auto est = estimate_epoch_length(qs, 20000, 32, 13);
    EXPECT_NEAR(est.mean_draws / oracle::markov_expected_draws(q), 1.0, 0.02);
  }
}

TEST(EpochLength, MarkovOracleHandValues) {
  // Two classes of one image each: E[T] = 3. One class of quota k: E[T] = k.
  EXPECT_DOUBLE_EQ(oracle::markov_expected_draws({1, 1}), 3.0);
  EXPECT_DOUBLE_EQ(oracle::markov_expected_draws({4}), 4.0);
  EXPECT_DOUBLE_EQ(oracle::coupon_collector(3), 5.5);
}

TEST(EpochLength, ThreadIndependentAndBatchDerived) {
  const std::vector<std::size_t> q{3, 1, 2};
  const auto a = estimate_epoch_length(q, 500, 4, 21);
  const auto b = estimate_epoch_length(q, 500, 4, 21);
  EXPECT_EQ(a.trial_draws, b.trial_draws);
  EXPECT_DOUBLE_EQ(a.mean_batches, a.mean_draws / 4.0);
  EXPECT_GT(a.std_draws, 0.0);
}

TEST(EpochLength, StandardEpochRatio) {
  // Published Monte Carlo means over 57,840 images at batch size 32.
  EXPECT_DOUBLE_EQ(57840.0 / 32.0, 1807.5);
  EXPECT_NEAR(std::round(std_epoch_ratio(15206.14, 57840, 32) * 100.0) / 100.0, 8.41, 1e-12);
  EXPECT_NEAR(std::round(std_epoch_ratio(14128.68, 57840, 32) * 100.0) / 100.0, 7.82, 1e-12);
  EXPECT_NEAR(std::round(std_epoch_ratio(11960.70, 57840, 32) * 100.0) / 100.0, 6.62, 1e-12);
}

TEST(DeriveSeed, DistinctStreams) {
  std::set<std::uint64_t> s;
  for (std::uint64_t i = 0; i < 1000; ++i) s.insert(derive_seed(42, i));
  EXPECT_EQ(s.size(), 1000u);
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
}
