// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "moeplan/balancer.h"
#include "moeplan/config.h"
#include "moeplan/pipeline_sim.h"
#include "moeplan/strategy.h"
#include "moeplan/types.h"

namespace moeplan {

// A plan replayed through the simulator. Simulated step time is the
// pipeline makespan (boundary sends included) plus the data-parallel
// gradient sync that follows it.
struct RealizedPlan {
  ParallelStrategy strategy;
  ScheduleKind schedule = ScheduleKind::kInterleaved1F1BOverlap;
  BalanceResult result;
  ChunkDurations durations;
  Nanos send{0};
  Nanos dp_sync{0};
  ScheduleTrace trace;

  Nanos step_time() const { return trace.makespan + dp_sync; }
};

// Balances `strategy` and simulates the optimum.
RealizedPlan realize(const ParallelStrategy& strategy, const ModelConfig& model,
                     const ClusterTopology& cluster, const TrainingJob& job, ScheduleKind schedule);

// Simulates a given plan. result.objective and per_stage_memory describe the
// plan as-is (the memory cap is not enforced); proven_optimal is false.
RealizedPlan realize(const ParallelStrategy& strategy, const PipelinePlan& plan,
                     const ModelConfig& model, const ClusterTopology& cluster,
                     const TrainingJob& job, ScheduleKind schedule);

struct PlanSearch {
  std::int64_t evaluated = 0;
  std::int64_t infeasible = 0;
  std::vector<RankedCandidate> ranked;                           // best top_k feasible, ranks 1..n
  std::vector<std::pair<std::int64_t, RealizedPlan>> realized;   // (rank, plan)
  std::vector<std::pair<std::int64_t, std::string>> unbalanced;  // (rank, reason)
  std::optional<std::size_t> best;                               // index into realized

  const RealizedPlan* chosen() const { return best ? &realized[*best].second : nullptr; }
  std::int64_t chosen_rank() const { return best ? realized[*best].first : 0; }
};

// Enumerates and ranks strategies by their analytical estimate, balances and
// simulates the top_k, and picks the lowest simulated step time (the better
// rank on ties). The estimate orders the shortlist; the simulator decides,
// because interleaved plans with uneven chunks can run well above their
// surrogate objective. Throws Infeasible when no candidate fits the memory
// cap even with full recomputation, carrying the lightest estimate.
PlanSearch search_plans(const ModelConfig& model, const ClusterTopology& cluster,
                        const TrainingJob& job, const SearchLimits& limits, std::int64_t top_k,
                        ScheduleKind schedule, unsigned threads = 0);

}  // namespace moeplan
