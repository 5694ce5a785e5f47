// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeplan/ep_comm.h"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "moeplan/errors.h"

namespace moeplan {
namespace {

// std::uniform_int_distribution is implementation-defined; this is not.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double link_time(const LinkSpec& link, std::int64_t peers, double bytes) {
  if (bytes <= 0) return 0;
  return link.latency_sec * static_cast<double>(std::max<std::int64_t>(peers, 1)) +
         bytes / link.bandwidth_bytes_per_sec;
}

}  // namespace

EpLayout make_ep_layout(std::int64_t num_nodes, std::int64_t devices_per_node,
                        std::int64_t num_experts) {
  if (num_nodes < 1 || devices_per_node < 1) {
    throw InvalidParams("ep layout: nodes and devices per node must be >= 1");
  }
  EpLayout layout;
  layout.num_nodes = num_nodes;
  layout.devices_per_node = devices_per_node;
  layout.ep_size = num_nodes * devices_per_node;
  layout.num_experts = num_experts;
  if (num_experts < 1 || num_experts % layout.ep_size != 0) {
    throw InvalidParams(fmt::format("ep layout: {} experts do not split evenly over {} devices",
                                    num_experts, layout.ep_size));
  }
  const std::int64_t per_device = num_experts / layout.ep_size;
  layout.expert_to_device.resize(num_experts);
  for (std::int64_t e = 0; e < num_experts; ++e) layout.expert_to_device[e] = e / per_device;
  return layout;
}

RoutingTable route_tokens(std::int64_t tokens_per_device, std::int64_t k, const EpLayout& layout,
                          double skew, std::uint64_t seed, Bytes token_bytes) {
  const std::int64_t n = layout.num_experts;
  if (tokens_per_device < 1) throw InvalidParams("route_tokens: tokens_per_device must be >= 1");
  if (k < 1 || k > n) throw InvalidParams("route_tokens: k must lie in [1, num_experts]");
  if (!(skew >= 0 && skew < 1)) throw InvalidParams("route_tokens: skew must lie in [0, 1)");
  if (token_bytes < 1) throw InvalidParams("route_tokens: token_bytes must be >= 1");

  RoutingTable table;
  table.devices = layout.ep_size;
  table.tokens_per_device = tokens_per_device;
  table.k = k;
  table.token_bytes = token_bytes;
  table.experts.resize(static_cast<std::size_t>(layout.ep_size * tokens_per_device * k));

  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> deck(n);
  std::vector<char> taken(n, 0);
  // Dense draws without skew use a partial shuffle; rejection would stall.
  const bool shuffle = skew == 0 && 2 * k > n;
  auto out = table.experts.begin();
  for (std::int64_t t = 0; t < layout.ep_size * tokens_per_device; ++t) {
    if (shuffle) {
      std::iota(deck.begin(), deck.end(), 0u);
      for (std::int64_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::int64_t>(bounded(rng, n - i));
        std::swap(deck[i], deck[j]);
        *out++ = deck[i];
      }
      continue;
    }
    for (std::int64_t i = 0; i < k;) {
      std::uint32_t e = 0;
      if (skew <= 0 || unit(rng) >= skew) e = static_cast<std::uint32_t>(bounded(rng, n));
      if (taken[e]) continue;
      taken[e] = 1;
      out[i++] = e;
    }
    for (std::int64_t i = 0; i < k; ++i) taken[out[i]] = 0;
    out += k;
  }
  return table;
}

std::string_view to_string(EpMode mode) {
  return mode == EpMode::kGlobalA2A ? "global_a2a" : "hierarchical";
}

EpTraffic traffic(const RoutingTable& routing, const EpLayout& layout, EpMode mode) {
  if (routing.devices != layout.ep_size) {
    throw InconsistentInput(
        fmt::format("routing covers {} devices, layout has {}", routing.devices, layout.ep_size));
  }
  const std::int64_t devices = layout.ep_size;
  const std::int64_t dpn = layout.devices_per_node;
  const Bytes tb = routing.token_bytes;
  EpTraffic out;
  out.mode = mode;
  out.num_nodes = layout.num_nodes;
  out.devices_per_node = dpn;
  out.inter_sent.assign(devices, 0);
  out.inter_received.assign(devices, 0);
  out.intra_sent.assign(devices, 0);
  out.intra_received.assign(devices, 0);

  if (mode == EpMode::kHierarchical) {
    const Bytes gathered = (layout.num_nodes - 1) * routing.tokens_per_device * tb;
    std::fill(out.inter_sent.begin(), out.inter_sent.end(), gathered);
    std::fill(out.inter_received.begin(), out.inter_received.end(), gathered);
  }
  for (std::int64_t src = 0; src < devices; ++src) {
    for (std::int64_t t = 0; t < routing.tokens_per_device; ++t) {
      for (std::uint32_t e : routing.token(src, t)) {
        if (static_cast<std::int64_t>(e) >= layout.num_experts) {
          throw InconsistentInput(fmt::format("expert id {} out of range", e));
        }
        const std::int64_t dst = layout.device_of(e);
        // After the gather the copy starts from the same-index device on the
        // expert's node.
        const std::int64_t from =
            mode == EpMode::kHierarchical ? layout.node_of(dst) * dpn + src % dpn : src;
        if (from == dst) continue;
        if (layout.node_of(from) == layout.node_of(dst)) {
          out.intra_sent[from] += tb;
          out.intra_received[dst] += tb;
        } else {
          out.inter_sent[from] += tb;
          out.inter_received[dst] += tb;
        }
      }
    }
  }
  out.inter_node_bytes_per_device = *std::max_element(out.inter_sent.begin(), out.inter_sent.end());
  out.intra_node_bytes_per_device = *std::max_element(out.intra_sent.begin(), out.intra_sent.end());
  return out;
}

EpTraffic traffic(const RoutingTable& routing, const EpLayout& layout, EpMode mode,
                  const ClusterTopology& cluster) {
  EpTraffic out = traffic(routing, layout, mode);
  out.est_time_sec = ep_time(out, cluster, OverlapConfig{1, 0});
  return out;
}

EpTiming ep_schedule(const EpTraffic& traffic, const ClusterTopology& cluster,
                     const OverlapConfig& overlap) {
  if (overlap.num_streams < 1) throw InvalidParams("ep_time: num_streams must be >= 1");
  if (!(overlap.ffn_compute_sec >= 0)) throw InvalidParams("ep_time: ffn_compute_sec must be >= 0");
  const double slices = static_cast<double>(overlap.num_streams);
  const double inter = link_time(cluster.inter_node_link, traffic.num_nodes - 1,
                                 static_cast<double>(traffic.inter_node_bytes_per_device) / slices);
  const double intra = link_time(cluster.intra_node_link, traffic.devices_per_node - 1,
                                 static_cast<double>(traffic.intra_node_bytes_per_device) / slices);
  const double compute = overlap.ffn_compute_sec / slices;

  // Three-machine flow shop, slices in order.
  double gather_done = 0;
  double a2a_done = 0;
  double ffn_done = 0;
  for (std::int64_t i = 0; i < overlap.num_streams; ++i) {
    gather_done += inter;
    a2a_done = std::max(a2a_done, gather_done) + intra;
    ffn_done = std::max(ffn_done, a2a_done) + compute;
  }
  EpTiming t;
  t.inter_sec = inter * slices;
  t.intra_sec = intra * slices;
  t.compute_sec = overlap.ffn_compute_sec;
  t.makespan_sec = ffn_done;
  t.exposed_sec = std::max(0.0, ffn_done - overlap.ffn_compute_sec);
  return t;
}

double ep_time(const EpTraffic& traffic, const ClusterTopology& cluster,
               const OverlapConfig& overlap) {
  return ep_schedule(traffic, cluster, overlap).exposed_sec;
}

double expected_inter_bytes(EpMode mode, const EpLayout& layout, std::int64_t k,
                            std::int64_t tokens_per_device, Bytes token_bytes) {
  const double bh = static_cast<double>(tokens_per_device) * static_cast<double>(token_bytes);
  if (mode == EpMode::kHierarchical) return static_cast<double>(layout.num_nodes - 1) * bh;
  const double remote = static_cast<double>(layout.ep_size - layout.devices_per_node) /
                        static_cast<double>(layout.ep_size);
  return bh * static_cast<double>(k) * remote;
}

bool hierarchical_wins(const EpLayout& layout, std::int64_t k) {
  // Cross-multiplied to stay in integers: (N_g - 1) * E < k * (E - d_g).
  return (layout.num_nodes - 1) * layout.ep_size < k * (layout.ep_size - layout.devices_per_node);
}

}  // namespace moeplan
