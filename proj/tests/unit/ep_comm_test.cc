// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/ep_comm.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "moeplan/config.h"
#include "moeplan/errors.h"
#include "oracles.h"

namespace moeplan {
namespace {

constexpr Bytes kTokenBytes = 5120 * 2;

ClusterTopology unit_cluster(std::int64_t nodes, std::int64_t per_node) {
  ClusterTopology c;
  c.num_nodes = nodes;
  c.devices_per_node = per_node;
  c.device_memory_bytes = kGiB;
  c.device_flops_per_sec = 1e12;
  c.intra_node_link = {0, 1};
  c.inter_node_link = {0, 1};
  return c;
}

EpTraffic synthetic(Bytes inter, Bytes intra) {
  EpTraffic t;
  t.num_nodes = 2;
  t.devices_per_node = 2;
  t.inter_node_bytes_per_device = inter;
  t.intra_node_bytes_per_device = intra;
  return t;
}

TEST(Layout, DealsExpertsInBlocks) {
  const EpLayout l = make_ep_layout(2, 4, 16);
  EXPECT_EQ(l.ep_size, 8);
  EXPECT_EQ(l.device_of(0), 0);
  EXPECT_EQ(l.device_of(1), 0);
  EXPECT_EQ(l.device_of(15), 7);
  EXPECT_EQ(l.node_of(l.device_of(9)), 1);
  EXPECT_THROW(make_ep_layout(2, 4, 12), InvalidParams);
  EXPECT_THROW(make_ep_layout(0, 4, 16), InvalidParams);
}

TEST(RouteTokens, TopKEqualToExpertCountListsEveryExpert) {
  const EpLayout l = make_ep_layout(2, 2, 8);
  const RoutingTable r = route_tokens(32, 8, l, 0.3, 5, kTokenBytes);
  for (std::int64_t d = 0; d < r.devices; ++d) {
    for (std::int64_t t = 0; t < r.tokens_per_device; ++t) {
      const auto experts = r.token(d, t);
      std::set<std::uint32_t> seen(experts.begin(), experts.end());
      EXPECT_EQ(seen.size(), 8u);
    }
  }
}

TEST(RouteTokens, UniformLoadIsEven) {
  const EpLayout l = make_ep_layout(2, 8, 16);
  const RoutingTable r = route_tokens(8192, 4, l, 0.0, 11, kTokenBytes);
  std::vector<std::int64_t> load(16, 0);
  for (std::uint32_t e : r.experts) ++load[e];
  const double mean = static_cast<double>(r.experts.size()) / 16.0;
  for (std::int64_t n : load) EXPECT_NEAR(static_cast<double>(n), mean, 0.05 * mean);
}

TEST(RouteTokens, SkewFavoursTheHotExpert) {
  const EpLayout l = make_ep_layout(2, 8, 16);
  const RoutingTable r = route_tokens(4096, 2, l, 0.5, 11, kTokenBytes);
  std::vector<std::int64_t> load(16, 0);
  for (std::uint32_t e : r.experts) ++load[e];
  EXPECT_EQ(std::max_element(load.begin(), load.end()) - load.begin(), 0);
}

TEST(RouteTokens, SameSeedSameTable) {
  const EpLayout l = make_ep_layout(2, 8, 16);
  const RoutingTable a = route_tokens(1000, 8, l, 0.2, 42, kTokenBytes);
  const RoutingTable b = route_tokens(1000, 8, l, 0.2, 42, kTokenBytes);
  const RoutingTable c = route_tokens(1000, 8, l, 0.2, 43, kTokenBytes);
  EXPECT_EQ(a.experts, b.experts);
  EXPECT_NE(a.experts, c.experts);
}

TEST(Traffic, MatchesPerTokenAccounting) {
  for (auto [nodes, per_node, experts, k] : {std::tuple{2, 8, 16, 8}, std::tuple{4, 2, 16, 3},
                                             std::tuple{3, 4, 24, 1}, std::tuple{1, 8, 8, 2}}) {
    const EpLayout l = make_ep_layout(nodes, per_node, experts);
    const RoutingTable r = route_tokens(300, k, l, 0.1, 9, kTokenBytes);
    for (EpMode mode : {EpMode::kGlobalA2A, EpMode::kHierarchical}) {
      const EpTraffic t = traffic(r, l, mode);
      const auto truth = oracle::count_ep_bytes(r, l, mode);
      EXPECT_EQ(t.inter_sent, truth.inter_sent) << to_string(mode);
      EXPECT_EQ(t.intra_sent, truth.intra_sent) << to_string(mode);
      EXPECT_EQ(t.inter_received, truth.inter_received) << to_string(mode);
      EXPECT_EQ(t.intra_received, truth.intra_received) << to_string(mode);
      EXPECT_EQ(t.inter_node_bytes_per_device,
                *std::max_element(truth.inter_sent.begin(), truth.inter_sent.end()));
    }
  }
}

TEST(Traffic, BytesAreConserved) {
  const EpLayout l = make_ep_layout(4, 4, 32);
  const RoutingTable r = route_tokens(500, 6, l, 0.25, 3, kTokenBytes);
  for (EpMode mode : {EpMode::kGlobalA2A, EpMode::kHierarchical}) {
    const EpTraffic t = traffic(r, l, mode);
    auto sum = [](const std::vector<Bytes>& v) {
      return std::accumulate(v.begin(), v.end(), Bytes{0});
    };
    EXPECT_EQ(sum(t.inter_sent), sum(t.inter_received));
    EXPECT_EQ(sum(t.intra_sent), sum(t.intra_received));
  }
}

TEST(Traffic, HierarchicalCutsCrossNodeBytesFourfold) {
  const std::int64_t tokens = 4096;
  const EpLayout l = make_ep_layout(2, 8, 16);
  const RoutingTable r = route_tokens(tokens, 8, l, 0.0, 2026, kTokenBytes);
  const EpTraffic global = traffic(r, l, EpMode::kGlobalA2A);
  const EpTraffic hier = traffic(r, l, EpMode::kHierarchical);
  const double bh = static_cast<double>(tokens * kTokenBytes);
  EXPECT_EQ(hier.inter_node_bytes_per_device, tokens * kTokenBytes);
  EXPECT_DOUBLE_EQ(expected_inter_bytes(EpMode::kGlobalA2A, l, 8, tokens, kTokenBytes), 4 * bh);
  EXPECT_DOUBLE_EQ(expected_inter_bytes(EpMode::kHierarchical, l, 8, tokens, kTokenBytes), bh);
  // The per-device maximum sits a little above the 4 B H expectation.
  const double ratio = static_cast<double>(global.inter_node_bytes_per_device) /
                       static_cast<double>(hier.inter_node_bytes_per_device);
  EXPECT_NEAR(ratio, 4.0, 0.1);
  EXPECT_TRUE(hierarchical_wins(l, 8));
}

TEST(Traffic, SingleNodeHasNoCrossNodeBytes) {
  const EpLayout l = make_ep_layout(1, 8, 16);
  const RoutingTable r = route_tokens(256, 4, l, 0.0, 1, kTokenBytes);
  for (EpMode mode : {EpMode::kGlobalA2A, EpMode::kHierarchical}) {
    EXPECT_EQ(traffic(r, l, mode).inter_node_bytes_per_device, 0);
  }
  EXPECT_FALSE(hierarchical_wins(l, 4));
}

TEST(Traffic, TopOneRoutingFavoursTheGlobalExchange) {
  const std::int64_t tokens = 4096;
  const EpLayout l = make_ep_layout(2, 8, 16);
  const RoutingTable r = route_tokens(tokens, 1, l, 0.0, 8, kTokenBytes);
  const EpTraffic global = traffic(r, l, EpMode::kGlobalA2A);
  const EpTraffic hier = traffic(r, l, EpMode::kHierarchical);
  EXPECT_LT(global.inter_node_bytes_per_device, hier.inter_node_bytes_per_device);
  EXPECT_FALSE(hierarchical_wins(l, 1));
  // The law flips between k = 2 (equal) and k = 3.
  EXPECT_FALSE(hierarchical_wins(l, 2));
  EXPECT_TRUE(hierarchical_wins(l, 3));
}

TEST(Traffic, HierarchicalCrossNodeBytesIgnoreTopK) {
  const EpLayout l = make_ep_layout(4, 2, 16);
  std::set<Bytes> seen;
  for (std::int64_t k : {1, 2, 4, 8, 16}) {
    const RoutingTable r = route_tokens(128, k, l, 0.1, 4, kTokenBytes);
    seen.insert(traffic(r, l, EpMode::kHierarchical).inter_node_bytes_per_device);
  }
  EXPECT_EQ(seen.size(), 1u);
}

TEST(Overlap, OneStreamIsSerial) {
  const EpTiming t = ep_schedule(synthetic(3, 5), unit_cluster(2, 2), {1, 0});
  EXPECT_DOUBLE_EQ(t.exposed_sec, 8.0);
  EXPECT_DOUBLE_EQ(t.exposed_sec, t.inter_sec + t.intra_sec);
}

TEST(Overlap, TwoSlicesOfOneUnitEach) {
  const EpTiming two = ep_schedule(synthetic(2, 2), unit_cluster(2, 2), {2, 2.0});
  const EpTiming one = ep_schedule(synthetic(2, 2), unit_cluster(2, 2), {1, 2.0});
  EXPECT_DOUBLE_EQ(two.makespan_sec, 4.0);
  EXPECT_DOUBLE_EQ(one.makespan_sec, 6.0);
}

TEST(Overlap, LargeComputeHidesCommunication) {
  const EpTraffic t = synthetic(100, 100);
  double prev = 1.0;
  for (double compute : {1e2, 1e4, 1e6, 1e8}) {
    const EpTiming timing = ep_schedule(t, unit_cluster(2, 2), {8, compute});
    const double fraction = timing.exposed_sec / timing.makespan_sec;
    EXPECT_LE(fraction, prev);
    prev = fraction;
  }
  EXPECT_LT(prev, 1e-5);
}

TEST(Overlap, MoreStreamsNeverHurtWithoutLatency) {
  const EpTraffic t = synthetic(700, 300);
  double prev = ep_time(t, unit_cluster(2, 2), {1, 500});
  for (std::int64_t s = 2; s <= 16; s *= 2) {
    const double now = ep_time(t, unit_cluster(2, 2), {s, 500});
    EXPECT_LE(now, prev + 1e-9);
    prev = now;
  }
}

TEST(Overlap, RejectsBadParameters) {
  EXPECT_THROW(ep_schedule(synthetic(1, 1), unit_cluster(2, 2), {0, 0}), InvalidParams);
  EXPECT_THROW(ep_schedule(synthetic(1, 1), unit_cluster(2, 2), {2, -1}), InvalidParams);
}

}  // namespace
}  // namespace moeplan
