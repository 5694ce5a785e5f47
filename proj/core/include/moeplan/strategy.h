// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "moeplan/config.h"
#include "moeplan/cost_model.h"
#include "moeplan/types.h"

namespace moeplan {

enum class SpMode : std::uint8_t {
  kAuto,  // sequence parallel exactly when tp > 1
  kOff,
  kOn,    // only meaningful for tp > 1; tp = 1 points keep sp off
  kBoth,  // enumerate both settings for tp > 1
};

SpMode parse_sp_mode(std::string_view text);
std::string_view to_string(SpMode mode);

// Upper bounds of the search. A zero bound means "derived from the inputs":
// tp <= devices_per_node, pp/ep <= world size, op <= dp.
struct SearchLimits {
  std::int64_t max_tp = 0;
  std::int64_t max_pp = 0;
  std::int64_t max_vpp = 4;
  std::int64_t max_ep = 0;
  std::int64_t max_op = 0;
  std::int64_t max_micro_batch_size = 8;
  SpMode sp_mode = SpMode::kAuto;
  // Exact values to hold fixed; 0 leaves the dimension free.
  std::int64_t pin_pp = 0;
  std::int64_t pin_vpp = 0;
  std::int64_t pin_micro_batches = 0;
};

// Every strategy meeting the invariants (dp*tp*pp = world, tp intra-node,
// ep | dp, ep | routed experts, op | dp, dp*mbs*m = global batch, layers >=
// pp*vpp) within `limits`, sorted ascending by (dp, tp, pp, vpp, ep, op,
// micro_batch_size, sp_enabled). Throws EmptySearchSpace when nothing
// qualifies.
std::vector<ParallelStrategy> enumerate(const ModelConfig& model, const ClusterTopology& cluster,
                                        const TrainingJob& job, const SearchLimits& limits = {});

struct RankedCandidate {
  ParallelStrategy strategy;
  CostEstimate estimate;
  // Lightest recompute mode (none, selective, full) whose even plan fits.
  RecomputeMode recompute = RecomputeMode::kNone;
  bool feasible = false;
  std::int64_t rank = 0;  // 1-based among feasible candidates; 0 otherwise
};

// Estimates every candidate on an even plan. Output order follows the input.
// `threads` = 0 uses the hardware concurrency; results do not depend on it.
std::vector<RankedCandidate> evaluate(const std::vector<ParallelStrategy>& candidates,
                                      const ModelConfig& model, const ClusterTopology& cluster,
                                      const TrainingJob& job, unsigned threads = 0);

// The best `top_k` feasible candidates by estimated step time; ties fall back
// to (pp, tp, ep, dp) and then the remaining fields, all ascending.
std::vector<RankedCandidate> rank(const std::vector<ParallelStrategy>& candidates,
                                  const ModelConfig& model, const ClusterTopology& cluster,
                                  const TrainingJob& job, std::int64_t top_k, unsigned threads = 0);

// Orders two evaluated candidates the way rank() does.
bool rank_before(const RankedCandidate& a, const RankedCandidate& b);

}  // namespace moeplan
