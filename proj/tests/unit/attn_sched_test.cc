// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/attn_sched.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "moeplan/errors.h"
#include "oracles.h"

namespace moeplan {
namespace {

std::int64_t peak(const Assignment& a) { return *std::max_element(a.loads.begin(), a.loads.end()); }

void expect_valid(const Assignment& a, const std::vector<std::int64_t>& costs) {
  ASSERT_EQ(a.device_of_sample.size(), costs.size());
  std::vector<std::int64_t> count(a.num_devices, 0), load(a.num_devices, 0);
  for (std::size_t i = 0; i < costs.size(); ++i) {
    ++count[a.device_of_sample[i]];
    load[a.device_of_sample[i]] += costs[i];
  }
  for (std::int64_t n : count) EXPECT_EQ(n, a.samples_per_device);
  EXPECT_EQ(load, a.loads);
}

TEST(SampleCost, Examples) {
  EXPECT_EQ(sample_cost({{1}}), 1);
  EXPECT_EQ(sample_cost({{8192}}), 33'558'528);
  EXPECT_EQ(sample_cost({{4096, 4096}}), 16'781'312);
  EXPECT_THROW(sample_cost({{}}), InvalidParams);
  EXPECT_THROW(sample_cost({{3, 0}}), InvalidParams);
}

TEST(SampleCost, MatchesTheMaskWalk) {
  // Every composition of 1..12.
  for (std::int64_t total = 1; total <= 12; ++total) {
    for (std::uint32_t cuts = 0; cuts < (1u << (total - 1)); ++cuts) {
      std::vector<std::int64_t> docs{1};
      for (std::int64_t i = 1; i < total; ++i) {
        if (cuts & (1u << (i - 1))) {
          docs.push_back(1);
        } else {
          ++docs.back();
        }
      }
      EXPECT_EQ(sample_cost({docs}), oracle::masked_pairs(docs));
    }
  }
}

TEST(BalanceCosts, TextbookInstance) {
  const std::vector<std::int64_t> costs{10, 8, 7, 5, 4, 2};
  const Assignment a = balance_costs(costs, 3, 2);
  expect_valid(a, costs);
  EXPECT_EQ(peak(a), 12);
  EXPECT_EQ(oracle::min_max_partition(costs, 3, 2), 12);
}

TEST(BalanceCosts, EqualCostsAreAlreadyBalanced) {
  const Assignment a = balance_costs(std::vector<std::int64_t>(12, 7), 4, 3);
  EXPECT_DOUBLE_EQ(imbalance(a), 1.0);
}

TEST(BalanceCosts, OneDeviceKeepsTheIdentity) {
  const std::vector<std::int64_t> costs{5, 1, 9};
  const Assignment a = balance_costs(costs, 1, 3);
  EXPECT_EQ(a.device_of_sample, (std::vector<std::int64_t>{0, 0, 0}));
  EXPECT_EQ(a.loads, (std::vector<std::int64_t>{15}));
}

TEST(BalanceCosts, OnlyPermutesSamples) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::int64_t> cost(1, 1000);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::int64_t> costs(24);
    for (auto& c : costs) c = cost(rng);
    const Assignment a = balance_costs(costs, 6, 4);
    expect_valid(a, costs);
    EXPECT_LE(peak(a), peak(identity_assignment(costs, 6, 4)));
  }
}

TEST(BalanceCosts, CloseToTheOptimumOnSmallInstances) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::int64_t> cost(1, 100);
  double worst = 1.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<std::int64_t> costs(8);
    for (auto& c : costs) c = cost(rng);
    const std::int64_t best = oracle::min_max_partition(costs, 4, 2);
    const std::int64_t got = peak(balance_costs(costs, 4, 2));
    EXPECT_GE(got, best);
    worst = std::max(worst, static_cast<double>(got) / static_cast<double>(best));
  }
  EXPECT_LE(worst, 4.0 / 3.0);
}

TEST(BalanceCosts, ShapeMismatch) {
  EXPECT_THROW(balance_costs({1, 2, 3}, 2, 2), ShapeMismatch);
  EXPECT_THROW(balance_samples({{{4}}, {{2, 2}}}, 2, 2), ShapeMismatch);
}

TEST(BalanceSamples, UsesAttentionCosts) {
  const std::vector<SampleSpec> samples{
      {{8}}, {{4, 4}}, {{2, 2, 2, 2}}, {{1, 1, 1, 1, 1, 1, 1, 1}}};
  const Assignment a = balance_samples(samples, 2, 2);
  // Costs 36, 20, 12, 8: {36, 8} and {20, 12}.
  EXPECT_EQ(peak(a), 44);
}

TEST(BalancePerMicrobatch, KeepsSamplesInsideTheirMicrobatch) {
  const std::vector<std::int64_t> costs{9, 1, 1, 9, 5, 5, 2, 8};
  const Assignment a = balance_per_microbatch(costs, 2, 4, 2);
  expect_valid(a, costs);
  EXPECT_EQ(a.loads, (std::vector<std::int64_t>{20, 20}));
  // Each micro-batch of 4 samples puts 2 on each device.
  for (int mb = 0; mb < 2; ++mb) {
    std::vector<int> per_device(2, 0);
    for (int i = 0; i < 4; ++i) ++per_device[a.device_of_sample[4 * mb + i]];
    EXPECT_EQ(per_device, (std::vector<int>{2, 2}));
  }
  EXPECT_THROW(balance_per_microbatch(costs, 2, 4, 3), ShapeMismatch);
}

TEST(Imbalance, Examples) {
  Assignment a;
  a.num_devices = 2;
  a.loads = {3, 1};
  EXPECT_DOUBLE_EQ(imbalance(a), 1.5);
  a.loads = {4, 4};
  EXPECT_DOUBLE_EQ(imbalance(a), 1.0);
  a.loads = {0, 0};
  EXPECT_DOUBLE_EQ(imbalance(a), 1.0);
}

}  // namespace
}  // namespace moeplan
