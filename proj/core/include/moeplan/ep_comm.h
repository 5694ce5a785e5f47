// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "moeplan/config.h"
#include "moeplan/units.h"

namespace moeplan {

// One expert-parallel group of ep_size = num_nodes * devices_per_node devices.
// Device d sits on node d / devices_per_node; experts are dealt out in
// contiguous blocks, num_experts / ep_size per device.
struct EpLayout {
  std::int64_t ep_size = 1;
  std::int64_t num_nodes = 1;
  std::int64_t devices_per_node = 1;
  std::int64_t num_experts = 1;
  std::vector<std::int64_t> expert_to_device;

  std::int64_t node_of(std::int64_t device) const { return device / devices_per_node; }
  std::int64_t device_of(std::int64_t expert) const { return expert_to_device[expert]; }
};

// Throws InvalidParams unless num_experts is a positive multiple of the
// group size.
EpLayout make_ep_layout(std::int64_t num_nodes, std::int64_t devices_per_node,
                        std::int64_t num_experts);

struct RoutingTable {
  std::int64_t devices = 0;
  std::int64_t tokens_per_device = 0;
  std::int64_t k = 0;
  Bytes token_bytes = 0;
  std::vector<std::uint32_t> experts;  // [device][token][k], row-major

  std::span<const std::uint32_t> token(std::int64_t device, std::int64_t t) const {
    return {experts.data() + (device * tokens_per_device + t) * k, static_cast<std::size_t>(k)};
  }
};

// Top-k routing with k distinct experts per token. With probability `skew` a
// draw lands on the hot expert 0, otherwise it is uniform over all experts;
// repeated experts are redrawn. Deterministic for a given seed on every
// platform.
RoutingTable route_tokens(std::int64_t tokens_per_device, std::int64_t k, const EpLayout& layout,
                          double skew, std::uint64_t seed, Bytes token_bytes);

enum class EpMode : std::uint8_t { kGlobalA2A, kHierarchical };
std::string_view to_string(EpMode mode);

// Bytes moved by one dispatch. Every (token, expert) copy counts once; copies
// routed to the device that already holds the token are free.
//
//   global_a2a    each copy crosses the link between its source and the
//                 expert's device
//   hierarchical  each device all-gathers its raw tokens to its same-index
//                 peers on the other nodes, (N_g - 1) * B * token_bytes, then
//                 forwards the copies for experts on its node intra-node
struct EpTraffic {
  EpMode mode = EpMode::kGlobalA2A;
  Bytes inter_node_bytes_per_device = 0;  // max over devices of bytes sent
  Bytes intra_node_bytes_per_device = 0;
  std::vector<Bytes> inter_sent;
  std::vector<Bytes> inter_received;
  std::vector<Bytes> intra_sent;
  std::vector<Bytes> intra_received;
  std::int64_t num_nodes = 1;
  std::int64_t devices_per_node = 1;
  double est_time_sec = 0;  // serial time, set by the cluster overload
};

EpTraffic traffic(const RoutingTable& routing, const EpLayout& layout, EpMode mode);
EpTraffic traffic(const RoutingTable& routing, const EpLayout& layout, EpMode mode,
                  const ClusterTopology& cluster);

struct OverlapConfig {
  std::int64_t num_streams = 2;
  double ffn_compute_sec = 0;
};

struct EpTiming {
  double inter_sec = 0;
  double intra_sec = 0;
  double compute_sec = 0;
  double makespan_sec = 0;
  double exposed_sec = 0;  // makespan minus FFN compute
};

// Splits traffic and FFN compute into num_streams equal slices and runs them
// through three resources in order: inter-node gather, intra-node all-to-all,
// FFN. Each slice pays the link latencies again. One stream is the serial
// case. Throws InvalidParams for num_streams < 1 or negative compute.
EpTiming ep_schedule(const EpTraffic& traffic, const ClusterTopology& cluster,
                     const OverlapConfig& overlap);
double ep_time(const EpTraffic& traffic, const ClusterTopology& cluster,
               const OverlapConfig& overlap);

// Expected per-device inter-node bytes under uniform routing.
double expected_inter_bytes(EpMode mode, const EpLayout& layout, std::int64_t k,
                            std::int64_t tokens_per_device, Bytes token_bytes);

// The crossover law: hierarchical moves fewer inter-node bytes than the
// global all-to-all iff (N_g - 1) < k (E - d_g) / E.
bool hierarchical_wins(const EpLayout& layout, std::int64_t k);

}  // namespace moeplan
